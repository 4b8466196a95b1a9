use serde::{Deserialize, Serialize};

use crate::datapipe::parse_iob;
use crate::error::{Error, Result};

/// Exact-match fraction. Empty input is an error rather than 0/0.
pub fn intent_accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "intent accuracy: {} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Empty("intent_accuracy"));
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

fn check_aligned<S>(pred: &[Vec<S>], gold: &[Vec<S>], lengths: &[usize]) -> Result<()> {
    if pred.len() != gold.len() || gold.len() != lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted and {} gold sequences with {} lengths",
            pred.len(),
            gold.len(),
            lengths.len()
        )));
    }
    for (i, ((p, g), &n)) in pred.iter().zip(gold).zip(lengths).enumerate() {
        if p.len() < n || g.len() < n {
            return Err(Error::InvalidArgument(format!(
                "sequence {i}: length {n} exceeds {} predicted / {} gold tags",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

/// Per-token exact match over the first `lengths[i]` positions of each sequence.
pub fn token_accuracy<S: AsRef<str>>(
    pred: &[Vec<S>],
    gold: &[Vec<S>],
    lengths: &[usize],
) -> Result<f64> {
    check_aligned(pred, gold, lengths)?;
    let mut c = TokenCounts::default();
    for ((p, g), &n) in pred.iter().zip(gold).zip(lengths) {
        c.add(&p[..n], &g[..n]);
    }
    c.accuracy().ok_or(Error::Empty("token_accuracy"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub tokens: usize,
    pub correct: usize,
}

impl TokenCounts {
    pub fn add<S: AsRef<str>>(&mut self, pred: &[S], gold: &[S]) {
        self.tokens += gold.len();
        self.correct += pred
            .iter()
            .zip(gold)
            .filter(|(p, g)| p.as_ref() == g.as_ref())
            .count();
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.tokens > 0).then(|| self.correct as f64 / self.tokens as f64)
    }
}

/// Chunk counts that merge by addition, so scores over a split do not
/// depend on how it was batched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkCounts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ChunkCounts {
    pub fn add<S: AsRef<str>>(&mut self, pred: &[S], gold: &[S]) -> Result<()> {
        let p = parse_iob(pred)?;
        let g = parse_iob(gold)?;
        self.predicted += p.len();
        self.gold += g.len();
        // spans of one sequence are disjoint and sorted, so a merge walk finds matches
        let (mut i, mut j) = (0, 0);
        while i < p.len() && j < g.len() {
            match (p[i].start, p[i].end).cmp(&(g[j].start, g[j].end)) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if p[i].label == g[j].label {
                        self.correct += 1;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ChunkCounts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }

    /// Micro-averaged scores. With no chunks on either side every score is 1.
    pub fn prf(&self) -> Prf {
        if self.gold == 0 && self.predicted == 0 {
            log::info!("no gold or predicted chunks; precision, recall and F1 reported as 1");
            return Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.correct, self.predicted);
        let recall = ratio(self.correct, self.gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Chunk precision, recall and F1 over the first `lengths[i]` tags of each pair.
pub fn chunk_prf<S: AsRef<str>>(
    pred: &[Vec<S>],
    gold: &[Vec<S>],
    lengths: &[usize],
) -> Result<Prf> {
    Ok(chunk_counts(pred, gold, lengths)?.prf())
}

pub fn chunk_counts<S: AsRef<str>>(
    pred: &[Vec<S>],
    gold: &[Vec<S>],
    lengths: &[usize],
) -> Result<ChunkCounts> {
    check_aligned(pred, gold, lengths)?;
    let mut c = ChunkCounts::default();
    for ((p, g), &n) in pred.iter().zip(gold).zip(lengths) {
        c.add(&p[..n], &g[..n])?;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub utterances: usize,
    pub tokens: usize,
    pub gold_chunks: usize,
    pub predicted_chunks: usize,
    pub correct_chunks: usize,
}

/// Scores for one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub split: String,
    pub seed: u64,
    pub intent_accuracy: f64,
    pub slot_token_accuracy: f64,
    pub slot_chunk_precision: f64,
    pub slot_chunk_recall: f64,
    pub slot_chunk_f1: f64,
    pub counts: ReportCounts,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let pct = |v: f64| format!("{:6.2}", 100.0 * v);
        let mut s = format!(
            "{} on {}/{} (seed {})\n",
            self.model, self.dataset, self.split, self.seed
        );
        s += &format!("  {:<22}{}\n", "intent accuracy", pct(self.intent_accuracy));
        s += &format!(
            "  {:<22}{}\n",
            "slot token accuracy",
            pct(self.slot_token_accuracy)
        );
        s += &format!(
            "  {:<22}{}\n",
            "slot chunk precision",
            pct(self.slot_chunk_precision)
        );
        s += &format!(
            "  {:<22}{}\n",
            "slot chunk recall",
            pct(self.slot_chunk_recall)
        );
        s += &format!("  {:<22}{}\n", "slot chunk F1", pct(self.slot_chunk_f1));
        let c = &self.counts;
        s += &format!(
            "  utterances {}  tokens {}  chunks gold {} / predicted {} / correct {}\n",
            c.utterances, c.tokens, c.gold_chunks, c.predicted_chunks, c.correct_chunks
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(v: &[&str]) -> Vec<Vec<String>> {
        vec![v.iter().map(|s| s.to_string()).collect()]
    }

    #[test]
    fn intent_accuracy_cases() {
        assert_eq!(intent_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(intent_accuracy(&[1, 2, 3, 0], &[1, 2, 3, 4]).unwrap(), 0.75);
        assert!(intent_accuracy(&[], &[]).is_err());
        assert!(intent_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn token_accuracy_cases() {
        let g = seqs(&["O", "B-x", "I-x", "O", "O"]);
        assert_eq!(token_accuracy(&g, &g, &[5]).unwrap(), 1.0);
        let p = seqs(&["O", "B-x", "O", "O", "O"]);
        assert!((token_accuracy(&p, &g, &[5]).unwrap() - 0.8).abs() < 1e-15);
        let padded_g = seqs(&["O", "B-x", "<pad>"]);
        let padded_p = seqs(&["O", "B-x", "O"]);
        assert_eq!(token_accuracy(&padded_p, &padded_g, &[2]).unwrap(), 1.0);
        assert!(token_accuracy(&p, &g, &[6]).is_err());
    }

    #[test]
    fn chunk_scores() {
        let g = seqs(&["O", "B-x", "I-x", "O"]);
        let p = seqs(&["O", "B-x", "O", "O"]);
        let s = chunk_prf(&p, &g, &[4]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = chunk_prf(&g, &g, &[4]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let o = seqs(&["O", "O"]);
        let s = chunk_prf(&o, &o, &[2]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn label_must_match() {
        let g = seqs(&["B-x", "I-x"]);
        let p = seqs(&["B-y", "I-y"]);
        assert_eq!(chunk_prf(&p, &g, &[2]).unwrap().f1, 0.0);
    }
}
