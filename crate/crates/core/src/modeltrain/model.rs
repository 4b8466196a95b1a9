use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Variant};
use crate::datapipe::{Batch, EmbeddingTable, LabelMaps, Vocabulary};
use crate::error::{Error, Result};
use crate::fusion::{broadcast_intent, dense_add, mlb_fuse, MlbParams};
use crate::layers::{
    birnn, conv_encoder, crf_nll, crf_viterbi, dense, dropout, embed_lookup, Activation,
    ConvEncoderParams, CrfParams, DenseParams, Init, Mode, RnnParams,
};
use crate::numcore::{Graph, NodeId, ParamId, ParamStore, Scalar, Tensor};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntentBranch {
    Conv {
        conv: ConvEncoderParams,
        dense: DenseParams,
    },
    Rnn {
        fwd: RnnParams,
        bwd: RnnParams,
        dense: DenseParams,
    },
}

/// Parameter handles for one variant's wiring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: ParamId,
    pub intent: IntentBranch,
    pub slot_fwd: RnnParams,
    pub slot_bwd: RnnParams,
    pub slot_dense: DenseParams,
    pub fusion: Option<MlbParams>,
    pub intent_head: DenseParams,
    pub slot_head: DenseParams,
    pub crf: Option<CrfParams>,
}

impl Layout {
    /// Register every parameter of `cfg.variant` in `store`. `embeddings`
    /// supplies the initial word-vector table.
    pub fn build<T: Scalar>(
        cfg: &ModelConfig,
        n_intents: usize,
        n_tags: usize,
        embeddings: Tensor<T>,
        store: &mut ParamStore<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        if n_intents == 0 || n_tags == 0 {
            return Err(Error::InvalidArgument(
                "model needs at least one intent and one slot tag".into(),
            ));
        }
        let (_, dim) = embeddings.dims2()?;
        if dim != cfg.embed_dim {
            return Err(Error::shape(
                "embedding table",
                embeddings.shape(),
                &[cfg.embed_dim],
            ));
        }
        let mut init = Init::new(store, stream(cfg.seed, Purpose::Init, 0));
        let embedding = init.tensor("embedding", embeddings)?;
        let (h, f) = (cfg.hidden, cfg.features);
        let intent = if cfg.variant.uses_conv_intent() {
            let mut conv = ConvEncoderParams::new(
                &mut init,
                "intent.conv",
                &cfg.conv_widths,
                cfg.conv_filters,
                dim,
            )?;
            conv.activation = cfg.conv_activation;
            let dense = DenseParams::new(&mut init, "intent.dense", conv.output_width(), f)?;
            IntentBranch::Conv { conv, dense }
        } else {
            let fwd = RnnParams::new(&mut init, "intent.fwd", cfg.variant.slot_cell(), dim, h)?;
            let bwd = RnnParams::new(&mut init, "intent.bwd", cfg.variant.slot_cell(), dim, h)?;
            let dense = DenseParams::new(&mut init, "intent.dense", 2 * h, f)?;
            IntentBranch::Rnn { fwd, bwd, dense }
        };
        let slot_fwd = RnnParams::new(&mut init, "slot.fwd", cfg.variant.slot_cell(), dim, h)?;
        let slot_bwd = RnnParams::new(&mut init, "slot.bwd", cfg.variant.slot_cell(), dim, h)?;
        let slot_dense = DenseParams::new(&mut init, "slot.dense", 2 * h, f)?;
        let fusion = if cfg.variant.uses_mlb() {
            Some(MlbParams::new(
                &mut init,
                "fusion.mlb",
                f,
                f,
                cfg.mlb_rank,
                cfg.mlb_out,
            )?)
        } else {
            None
        };
        let fused = cfg.fused_width();
        let intent_head =
            DenseParams::new(&mut init, "head.intent", cfg.max_len * fused, n_intents)?;
        let slot_head = DenseParams::new(&mut init, "head.slot", fused, n_tags)?;
        let crf = if cfg.variant.uses_crf() {
            Some(CrfParams::new(&mut init, "crf", n_tags)?)
        } else {
            None
        };
        Ok(Layout {
            embedding,
            intent,
            slot_fwd,
            slot_bwd,
            slot_dense,
            fusion,
            intent_head,
            slot_head,
            crf,
        })
    }
}

/// A model variant with its parameters, vocabulary, and label maps.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub labels: LabelMaps,
    pub store: ParamStore<T>,
    pub layout: Layout,
}

/// Assemble `cfg.variant` around an initial embedding table.
pub fn build_model<T: Scalar>(
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    labels: &LabelMaps,
    embeddings: &EmbeddingTable<T>,
) -> Result<Model<T>> {
    if embeddings.matrix.shape()[0] != vocab.len() {
        return Err(Error::shape(
            "embedding rows",
            embeddings.matrix.shape(),
            &[vocab.len()],
        ));
    }
    let mut store = ParamStore::new();
    let layout = Layout::build(
        cfg,
        labels.n_intents(),
        labels.n_tags(),
        embeddings.matrix.clone(),
        &mut store,
    )?;
    Ok(Model {
        config: cfg.clone(),
        vocab: vocab.clone(),
        labels: labels.clone(),
        store,
        layout,
    })
}

/// Graph nodes of the two heads, before any softmax.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// batch × intents
    pub intent_logits: NodeId,
    /// batch × len × tags; CRF emissions for the model-1 variants
    pub slot_scores: NodeId,
}

/// Run one batch through the network. Dropout masks come from `rng` and
/// are used only in [`Mode::Train`].
pub fn model_forward<T: Scalar>(
    g: &mut Graph<'_, T>,
    cfg: &ModelConfig,
    layout: &Layout,
    batch: &Batch,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Outputs> {
    if batch.max_len != cfg.max_len {
        return Err(Error::shape(
            "batch length",
            &[batch.max_len],
            &[cfg.max_len],
        ));
    }
    let (b, l) = (batch.len(), batch.max_len);
    if b == 0 {
        return Err(Error::Empty("model_forward"));
    }
    let table = g.param(layout.embedding);
    let x = embed_lookup(g, table, &batch.token_ids, b, l)?;
    let act = cfg.branch_activation;

    let intent_3d = match &layout.intent {
        IntentBranch::Conv { conv, dense: d } => {
            let c = conv_encoder(g, x, conv)?;
            let v = dense(g, c, d, act)?;
            broadcast_intent(g, v, l)?
        }
        IntentBranch::Rnn { fwd, bwd, dense: d } => {
            let r = birnn(g, x, fwd, bwd)?;
            let r = dropout(g, r, cfg.dropout, mode, rng)?;
            dense(g, r, d, act)?
        }
    };
    let s = birnn(g, x, &layout.slot_fwd, &layout.slot_bwd)?;
    let slot_3d = dense(g, s, &layout.slot_dense, act)?;

    let fused = match &layout.fusion {
        Some(p) => mlb_fuse(g, intent_3d, slot_3d, p)?,
        None => dense_add(g, intent_3d, slot_3d)?,
    };
    let width = g.shape(fused)[2];
    let flat = g.reshape(fused, &[b, l * width])?;
    let intent_logits = dense(g, flat, &layout.intent_head, Activation::None)?;
    let slot_scores = dense(g, fused, &layout.slot_head, Activation::None)?;
    Ok(Outputs {
        intent_logits,
        slot_scores,
    })
}

/// Denominators for the two loss terms. Data-parallel shards pass the
/// whole batch's values so shard losses add up to the batch loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossNorms {
    pub utterances: usize,
    pub tokens: usize,
}

impl LossNorms {
    pub fn of(batch: &Batch) -> Self {
        LossNorms {
            utterances: batch.len(),
            tokens: batch.non_pad_tokens(),
        }
    }
}

/// `w_i · intent CE + w_s · slot term`. The slot term is the mean token CE
/// over non-padding positions, or the CRF negative log-likelihood averaged
/// over utterances when `crf` is given.
pub fn joint_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    out: &Outputs,
    batch: &Batch,
    crf: Option<&CrfParams>,
    weights: (f64, f64),
    norms: LossNorms,
) -> Result<NodeId> {
    if let Some(i) = batch.lengths.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!(
            "utterance {i} has no tokens"
        )));
    }
    let n_intents = g.shape(out.intent_logits)[1];
    let intent_targets: Vec<Option<usize>> = batch
        .intent_ids
        .iter()
        .map(|&i| (i < n_intents).then_some(i))
        .collect();
    let intent = g.softmax_cross_entropy(
        out.intent_logits,
        &intent_targets,
        T::of(norms.utterances as f64),
    )?;
    let slot = match crf {
        Some(p) => crf_nll(
            g,
            out.slot_scores,
            &batch.tag_ids,
            &batch.lengths,
            p,
            T::of(norms.utterances as f64),
        )?,
        None => {
            let l = batch.max_len;
            let targets: Vec<Option<usize>> = (0..batch.len() * l)
                .map(|k| (k % l < batch.lengths[k / l]).then_some(batch.tag_ids[k]))
                .collect();
            g.softmax_cross_entropy(out.slot_scores, &targets, T::of(norms.tokens as f64))?
        }
    };
    let wi = g.scale(intent, T::of(weights.0));
    let ws = g.scale(slot, T::of(weights.1));
    g.add(wi, ws)
}

/// Predicted intent id and slot tag ids (first `lengths[i]` positions) per utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predictions {
    pub intents: Vec<usize>,
    pub tags: Vec<Vec<usize>>,
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Model<T> {
    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Inference-mode predictions for one batch.
    pub fn predict(&self, batch: &Batch) -> Result<Predictions> {
        let mut g = Graph::new(&self.store);
        let mut rng = stream(self.config.seed, Purpose::Dropout, 0);
        let out = model_forward(
            &mut g,
            &self.config,
            &self.layout,
            batch,
            Mode::Infer,
            &mut rng,
        )?;
        let il = g.value(out.intent_logits);
        let intents = il.data().chunks(il.last_dim()).map(argmax).collect();
        let ss = g.value(out.slot_scores);
        let (_, l, k) = ss.dims3()?;
        let mut tags = Vec::with_capacity(batch.len());
        for (i, &n) in batch.lengths.iter().enumerate() {
            let e = &ss.data()[i * l * k..(i * l + n) * k];
            let path = match &self.layout.crf {
                Some(p) => crf_viterbi(e, n, &p.view(&self.store))?,
                None => e.chunks(k).map(argmax).collect(),
            };
            tags.push(path);
        }
        Ok(Predictions { intents, tags })
    }

    /// Softmax distributions of both heads, inference mode: batch × intents
    /// and batch × len × tags.
    pub fn probabilities(&self, batch: &Batch) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut g = Graph::new(&self.store);
        let mut rng = stream(self.config.seed, Purpose::Dropout, 0);
        let out = model_forward(
            &mut g,
            &self.config,
            &self.layout,
            batch,
            Mode::Infer,
            &mut rng,
        )?;
        let pi = g.softmax(out.intent_logits);
        let ps = g.softmax(out.slot_scores);
        Ok((g.value(pi).clone(), g.value(ps).clone()))
    }

    pub fn parameter_count(&self) -> usize {
        self.store.element_count()
    }
}
