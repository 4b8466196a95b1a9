use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, Variant};
use super::model::{Layout, Model};
use super::train::EpochRecord;
use crate::datapipe::{LabelMaps, Vocabulary};
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Precision, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"SLUF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Precision,
    /// Byte offset from the start of the payload section.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub labels: LabelMaps,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters are stored.
    pub best_epoch: Option<usize>,
    pub tensors: Vec<TensorEntry>,
}

/// A decoded checkpoint; tensor values are held at full width so either
/// precision can be rebuilt exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<Vec<f64>>,
}

/// Serialise a model, its training history and the best-epoch marker.
pub fn encode_checkpoint<T: Scalar>(
    model: &Model<T>,
    history: &[EpochRecord],
    best_epoch: Option<usize>,
) -> Result<Vec<u8>> {
    let mut payload = Vec::with_capacity(model.store.element_count() * T::PRECISION.byte_width());
    let mut tensors = Vec::with_capacity(model.store.len());
    for (_, name, t) in model.store.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: T::PRECISION,
            offset: payload.len() as u64,
        });
        for &v in t.data() {
            v.write_le(&mut payload);
        }
    }
    let header = CheckpointHeader {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        labels: model.labels.clone(),
        history: history.to_vec(),
        best_epoch,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(
    model: &Model<T>,
    history: &[EpochRecord],
    best_epoch: Option<usize>,
    path: &Path,
) -> Result<()> {
    let bytes = encode_checkpoint(model, history, best_epoch)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len());
    let Some(end) = end else {
        return Err(Error::Format(format!("truncated while reading {what}")));
    };
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    if take(bytes, &mut at, 4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes; not a checkpoint".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let hlen = u64::from_le_bytes(
        take(bytes, &mut at, 8, "header length")?
            .try_into()
            .unwrap(),
    );
    let hlen =
        usize::try_from(hlen).map_err(|_| Error::Format("header length overflows".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(take(bytes, &mut at, hlen, "header")?)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let payload = &bytes[at..];
    let mut values = Vec::with_capacity(header.tensors.len());
    let mut expected = 0u64;
    for t in &header.tensors {
        if t.offset != expected {
            return Err(Error::Format(format!(
                "tensor {} at offset {}, expected {expected}",
                t.name, t.offset
            )));
        }
        let count: usize = t.shape.iter().product();
        let w = t.dtype.byte_width();
        let mut pos = t.offset as usize;
        let raw = take(payload, &mut pos, count * w, &t.name)?;
        values.push(match t.dtype {
            Precision::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::read_le(c) as f64)
                .collect(),
            Precision::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
        });
        expected += (count * w) as u64;
    }
    if expected != payload.len() as u64 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, manifest describes {expected}",
            payload.len()
        )));
    }
    Ok(Checkpoint { header, values })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| e.context(path.display().to_string()))
}

impl Checkpoint {
    pub fn variant(&self) -> Variant {
        self.header.config.variant
    }

    pub fn precision(&self) -> Precision {
        self.header
            .tensors
            .first()
            .map(|t| t.dtype)
            .unwrap_or(self.header.config.precision)
    }

    /// Error unless the stored model is `variant`.
    pub fn expect_variant(&self, variant: Variant) -> Result<()> {
        if self.variant() != variant {
            return Err(Error::Config(format!(
                "checkpoint holds {}, requested {variant}",
                self.variant()
            )));
        }
        Ok(())
    }

    /// Rebuild the model; every tensor of the variant's layout must be
    /// present with the recorded shape.
    pub fn model<T: Scalar>(&self) -> Result<Model<T>> {
        let h = &self.header;
        let emb = h
            .tensors
            .iter()
            .find(|t| t.name == "embedding")
            .ok_or_else(|| Error::Format("no embedding tensor".into()))?;
        let mut store = ParamStore::<T>::new();
        let layout = Layout::build(
            &h.config,
            h.labels.n_intents(),
            h.labels.n_tags(),
            Tensor::zeros(&emb.shape),
            &mut store,
        )?;
        if store.len() != h.tensors.len() {
            return Err(Error::Format(format!(
                "{} tensors stored, {} expected by {}",
                h.tensors.len(),
                store.len(),
                h.config.variant
            )));
        }
        let mut seen = vec![false; store.len()];
        for (entry, vals) in h.tensors.iter().zip(&self.values) {
            let id = store
                .id(&entry.name)
                .ok_or_else(|| Error::Format(format!("unexpected tensor {}", entry.name)))?;
            if std::mem::replace(&mut seen[id.index()], true) {
                return Err(Error::Format(format!("tensor {} stored twice", entry.name)));
            }
            let t = store.get_mut(id);
            if t.shape() != entry.shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor {} has shape {:?}, layout expects {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
            for (d, &v) in t.data_mut().iter_mut().zip(vals) {
                *d = T::of(v);
            }
        }
        Ok(Model {
            config: h.config.clone(),
            vocab: h.vocab.clone(),
            labels: h.labels.clone(),
            store,
            layout,
        })
    }
}
