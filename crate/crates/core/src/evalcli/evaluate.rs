use std::path::Path;

use rayon::prelude::*;

use super::metrics::{ChunkCounts, MetricsReport, ReportCounts, TokenCounts};
use crate::datapipe::{build_vocab, encode_batch, load_split, Split, TaggedUtterance};
use crate::error::{Error, Result};
use crate::modeltrain::{load_checkpoint, Model, Variant};
use crate::numcore::{Precision, Scalar};

/// Rows per inference batch.
pub const EVAL_BATCH: usize = 256;

/// Additive tallies for one split; merging partial scores in any grouping
/// gives the same totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitScore {
    pub utterances: usize,
    pub intent_correct: usize,
    pub tokens: TokenCounts,
    pub chunks: ChunkCounts,
}

impl SplitScore {
    pub fn merge(&mut self, other: &SplitScore) {
        self.utterances += other.utterances;
        self.intent_correct += other.intent_correct;
        self.tokens.tokens += other.tokens.tokens;
        self.tokens.correct += other.tokens.correct;
        self.chunks.merge(&other.chunks);
    }

    pub fn intent_accuracy(&self) -> Option<f64> {
        (self.utterances > 0).then(|| self.intent_correct as f64 / self.utterances as f64)
    }

    /// Validation score used for model selection: mean of intent accuracy
    /// and slot chunk F1.
    pub fn selection_score(&self) -> f64 {
        (self.intent_accuracy().unwrap_or(0.0) + self.chunks.prf().f1) / 2.0
    }

    pub fn report(
        &self,
        model: &str,
        dataset: &str,
        split: &str,
        seed: u64,
    ) -> Result<MetricsReport> {
        let intent_accuracy = self
            .intent_accuracy()
            .ok_or(Error::Empty("evaluation split"))?;
        let prf = self.chunks.prf();
        Ok(MetricsReport {
            model: model.to_string(),
            dataset: dataset.to_string(),
            split: split.to_string(),
            seed,
            intent_accuracy,
            slot_token_accuracy: self.tokens.accuracy().unwrap_or(0.0),
            slot_chunk_precision: prf.precision,
            slot_chunk_recall: prf.recall,
            slot_chunk_f1: prf.f1,
            counts: ReportCounts {
                utterances: self.utterances,
                tokens: self.tokens.tokens,
                gold_chunks: self.chunks.gold,
                predicted_chunks: self.chunks.predicted,
                correct_chunks: self.chunks.correct,
            },
        })
    }
}

fn score_chunk<T: Scalar>(model: &Model<T>, utts: &[TaggedUtterance]) -> Result<SplitScore> {
    let cfg = &model.config;
    let batch = encode_batch(utts, cfg.max_len, &model.vocab, &model.labels)?;
    let pred = model.predict(&batch)?;
    let mut s = SplitScore {
        utterances: utts.len(),
        ..Default::default()
    };
    for (i, u) in utts.iter().enumerate() {
        if model.labels.intent_id(&u.intent) == Some(pred.intents[i]) {
            s.intent_correct += 1;
        }
        let n = batch.lengths[i];
        let names: Vec<&str> = pred.tags[i]
            .iter()
            .map(|&t| model.labels.tag_name(t).unwrap_or("O"))
            .collect();
        let gold: Vec<&str> = u.tags[..n].iter().map(String::as_str).collect();
        s.tokens.add(&names, &gold);
        s.chunks.add(&names, &gold)?;
    }
    Ok(s)
}

/// Score `model` on `utts`. Batches run on the current rayon pool; the
/// totals are identical for any thread count.
pub fn score_split<T: Scalar>(model: &Model<T>, utts: &[TaggedUtterance]) -> Result<SplitScore> {
    if utts.is_empty() {
        return Err(Error::Empty("score_split"));
    }
    let parts: Vec<Result<SplitScore>> = utts
        .par_chunks(EVAL_BATCH)
        .map(|c| score_chunk(model, c))
        .collect();
    let mut total = SplitScore::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total)
}

/// Full metrics report for `model` on one split.
pub fn evaluate_model<T: Scalar>(
    model: &Model<T>,
    utts: &[TaggedUtterance],
    dataset: &str,
    split: Split,
) -> Result<MetricsReport> {
    score_split(model, utts)?.report(
        model.variant().as_str(),
        dataset,
        split.dir_name(),
        model.config.seed,
    )
}

/// Evaluation thread cap from `SLUFUSE_THREADS`; 1 when unset or invalid.
pub fn env_threads() -> usize {
    std::env::var("SLUFUSE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Run `f` on a pool of [`env_threads`] threads.
pub fn with_threads<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(env_threads())
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Load a checkpoint and score it on `data_dir/<split>`. The label maps
/// rebuilt from `data_dir/train` must match the stored ones.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    data_dir: &Path,
    split: Split,
    expected: Option<Variant>,
) -> Result<MetricsReport> {
    let ckpt = load_checkpoint(checkpoint)?;
    if let Some(v) = expected {
        ckpt.expect_variant(v)?;
    }
    let train = load_split(&data_dir.join(Split::Train.dir_name()))?;
    let (_, labels) = build_vocab(&train)?;
    if labels != ckpt.header.labels {
        return Err(Error::LabelMap(format!(
            "{} has {} intents / {} tags, checkpoint has {} / {}",
            data_dir.display(),
            labels.n_intents(),
            labels.n_tags(),
            ckpt.header.labels.n_intents(),
            ckpt.header.labels.n_tags()
        )));
    }
    let utts = if split == Split::Train {
        train
    } else {
        load_split(&data_dir.join(split.dir_name()))?
    };
    let name = dataset_name(data_dir);
    with_threads(|| match ckpt.precision() {
        Precision::F32 => evaluate_model(&ckpt.model::<f32>()?, &utts, &name, split),
        Precision::F64 => evaluate_model(&ckpt.model::<f64>()?, &utts, &name, split),
    })?
}
