use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::ModelConfig;
use super::model::{build_model, joint_loss, model_forward, LossNorms, Model};
use crate::datapipe::{build_vocab, encode_batch, load_embeddings, Batch, Dataset, EmbeddingTable};
use crate::error::{Error, Result};
use crate::evalcli::score_split;
use crate::layers::Mode;
use crate::numcore::{Gradients, Graph, ParamStore, Scalar};
use crate::rng::{stream, Purpose};

/// One line of training history. Holds no timings, so two runs with the
/// same seed produce identical histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    pub valid_intent_accuracy: f64,
    pub valid_slot_token_accuracy: f64,
    pub valid_slot_chunk_f1: f64,
    /// Mean of intent accuracy and chunk F1; drives model selection.
    pub valid_score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
    /// A non-finite loss or gradient; the model is the last good one.
    Diverged(String),
}

/// The best model seen, with the history that led to it.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// Build vocabulary, embeddings and model from `data.train`, then train.
/// Without an embeddings file every row is drawn at random.
pub fn train<T: Scalar>(
    cfg: &ModelConfig,
    data: &Dataset,
    embeddings: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let (vocab, labels) = build_vocab(&data.train)?;
    let table = match embeddings {
        Some(p) => load_embeddings::<T>(p, &vocab, cfg.embed_dim, cfg.unseen_range, cfg.seed)?,
        None => EmbeddingTable::random(&vocab, cfg.embed_dim, cfg.unseen_range, cfg.seed),
    };
    log::info!(
        "vocabulary {} words ({} pretrained), {} intents, {} tags",
        vocab.len(),
        table.pretrained_rows(),
        labels.n_intents(),
        labels.n_tags()
    );
    let model = build_model(cfg, &vocab, &labels, &table)?;
    train_model(model, data)
}

/// Loss and summed gradient of one batch. The batch is cut into
/// `cfg.shards` contiguous pieces normalised by whole-batch counts, and the
/// pieces are added in order, so the result is independent of thread count.
pub fn batch_gradients<T: Scalar>(
    model: &Model<T>,
    batch: &Batch,
    step: u64,
) -> Result<(f64, Gradients<T>)> {
    let cfg = &model.config;
    let norms = LossNorms::of(batch);
    let n = batch.len();
    let shards = cfg.shards.min(n);
    let bounds: Vec<(usize, usize)> = (0..shards)
        .map(|s| (s * n / shards, (s + 1) * n / shards))
        .collect();
    let parts: Vec<Result<(f64, Gradients<T>)>> = bounds
        .par_iter()
        .enumerate()
        .map(|(s, &(lo, hi))| {
            let piece = batch.slice(lo..hi);
            let mut g = Graph::new(&model.store);
            let mut rng = stream(
                cfg.seed,
                Purpose::Dropout,
                step * cfg.shards as u64 + s as u64,
            );
            let out = model_forward(&mut g, cfg, &model.layout, &piece, Mode::Train, &mut rng)?;
            let loss = joint_loss(
                &mut g,
                &out,
                &piece,
                model.layout.crf.as_ref(),
                (cfg.intent_loss_weight, cfg.slot_loss_weight),
                norms,
            )?;
            Ok((g.value(loss).item().as_f64(), g.backward(loss)?))
        })
        .collect();
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(&model.store);
    for p in parts {
        let (l, g) = p?;
        total += l;
        grads.merge(&g);
    }
    Ok((total, grads))
}

fn restore<T: Scalar>(
    mut model: Model<T>,
    best: Option<(f64, usize, ParamStore<T>)>,
) -> (Model<T>, usize) {
    match best {
        Some((_, epoch, store)) => {
            model.store = store;
            (model, epoch)
        }
        None => (model, 0),
    }
}

/// Adam with per-epoch shuffling, validation after every epoch, and early
/// stopping after `patience` epochs without a strictly better score.
pub fn train_model<T: Scalar>(mut model: Model<T>, data: &Dataset) -> Result<TrainOutcome<T>> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if data.valid.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let all = encode_batch(&data.train, cfg.max_len, &model.vocab, &model.labels)?;
    if all.truncated > 0 {
        log::warn!(
            "{} training utterances truncated to {} tokens",
            all.truncated,
            cfg.max_len
        );
    }
    let mut adam = AdamState::new(&model.store, cfg.beta1, cfg.beta2, cfg.epsilon);
    let frozen = if cfg.freeze_embeddings {
        vec![model.layout.embedding]
    } else {
        Vec::new()
    };
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<T>)> = None;
    let mut since_best = 0;
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..all.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, Purpose::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size) {
            let batch = all.select(idx);
            let (loss, grads) = batch_gradients(&model, &batch, step)?;
            let bad = if !loss.is_finite() {
                Some(format!("loss {loss} at step {step}"))
            } else {
                match adam_step(
                    &mut model.store,
                    &grads,
                    &mut adam,
                    cfg.learning_rate,
                    &frozen,
                ) {
                    Err(Error::NonFinite(m)) => Some(format!("{m} at step {step}")),
                    r => {
                        r?;
                        None
                    }
                }
            };
            if let Some(msg) = bad {
                log::error!("epoch {epoch}: {msg}");
                if best.is_none() {
                    return Err(Error::Diverged { epoch, msg });
                }
                let (model, best_epoch) = restore(model, best);
                return Ok(TrainOutcome {
                    model,
                    history,
                    best_epoch,
                    stop: StopReason::Diverged(msg),
                });
            }
            loss_sum += loss;
            batches += 1;
            step += 1;
        }
        let score = score_split(&model, &data.valid)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            valid_intent_accuracy: score.intent_accuracy().unwrap_or(0.0),
            valid_slot_token_accuracy: score.tokens.accuracy().unwrap_or(0.0),
            valid_slot_chunk_f1: score.chunks.prf().f1,
            valid_score: score.selection_score(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5}  valid intent {:.4}  chunk f1 {:.4}",
            rec.train_loss,
            rec.valid_intent_accuracy,
            rec.valid_slot_chunk_f1
        );
        if best.as_ref().is_none_or(|b| rec.valid_score > b.0) {
            best = Some((rec.valid_score, epoch, model.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(rec);
        if since_best >= cfg.patience && epoch < cfg.max_epochs {
            let (model, best_epoch) = restore(model, best);
            return Ok(TrainOutcome {
                model,
                history,
                best_epoch,
                stop: StopReason::EarlyStop,
            });
        }
    }
    let (model, best_epoch) = restore(model, best);
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stop: StopReason::MaxEpochs,
    })
}
