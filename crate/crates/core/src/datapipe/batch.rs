use super::corpus::TaggedUtterance;
use super::vocab::{LabelMaps, Vocabulary, PAD};
use crate::error::{Error, Result};

/// Fixed-length encoding of a group of utterances.
///
/// `token_ids` and `tag_ids` are row-major `len() × max_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub token_ids: Vec<usize>,
    pub tag_ids: Vec<usize>,
    pub intent_ids: Vec<usize>,
    pub lengths: Vec<usize>,
    pub max_len: usize,
    /// Utterances cut down to `max_len`.
    pub truncated: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn tokens(&self, i: usize) -> &[usize] {
        let s = i * self.max_len;
        &self.token_ids[s..s + self.lengths[i]]
    }

    pub fn tags(&self, i: usize) -> &[usize] {
        let s = i * self.max_len;
        &self.tag_ids[s..s + self.lengths[i]]
    }

    /// Rows `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Batch {
        let l = self.max_len;
        Batch {
            token_ids: self.token_ids[range.start * l..range.end * l].to_vec(),
            tag_ids: self.tag_ids[range.start * l..range.end * l].to_vec(),
            intent_ids: self.intent_ids[range.clone()].to_vec(),
            lengths: self.lengths[range].to_vec(),
            max_len: l,
            truncated: 0,
        }
    }

    /// Rows `idx`, in that order, as a new batch.
    pub fn select(&self, idx: &[usize]) -> Batch {
        let l = self.max_len;
        let mut b = Batch {
            token_ids: Vec::with_capacity(idx.len() * l),
            tag_ids: Vec::with_capacity(idx.len() * l),
            intent_ids: Vec::with_capacity(idx.len()),
            lengths: Vec::with_capacity(idx.len()),
            max_len: l,
            truncated: 0,
        };
        for &i in idx {
            b.token_ids
                .extend_from_slice(&self.token_ids[i * l..(i + 1) * l]);
            b.tag_ids
                .extend_from_slice(&self.tag_ids[i * l..(i + 1) * l]);
            b.intent_ids.push(self.intent_ids[i]);
            b.lengths.push(self.lengths[i]);
        }
        b
    }

    pub fn non_pad_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }
}

/// Encode utterances to ids, post-padding (or truncating) to `max_len`.
pub fn encode_batch(
    utts: &[TaggedUtterance],
    max_len: usize,
    vocab: &Vocabulary,
    labels: &LabelMaps,
) -> Result<Batch> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let n = utts.len();
    let pad_tag = labels.pad_tag();
    let mut b = Batch {
        token_ids: vec![PAD; n * max_len],
        tag_ids: vec![pad_tag; n * max_len],
        intent_ids: Vec::with_capacity(n),
        lengths: Vec::with_capacity(n),
        max_len,
        truncated: 0,
    };
    for (i, u) in utts.iter().enumerate() {
        let len = u.len().min(max_len);
        if u.len() > max_len {
            b.truncated += 1;
        }
        for t in 0..len {
            b.token_ids[i * max_len + t] = vocab.id(&u.tokens[t]);
            b.tag_ids[i * max_len + t] = labels.tag_id(&u.tags[t]).unwrap_or(labels.unknown_tag());
        }
        b.lengths.push(len);
        b.intent_ids.push(
            labels
                .intent_id(&u.intent)
                .unwrap_or(labels.unknown_intent()),
        );
    }
    if b.truncated > 0 {
        log::warn!(
            "{} of {} utterances truncated to {max_len} tokens",
            b.truncated,
            n
        );
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{build_vocab, UNK};

    fn utt(tokens: &str, tags: &str) -> TaggedUtterance {
        TaggedUtterance::parse(tokens, tags, "i").unwrap()
    }

    #[test]
    fn pads_to_length() {
        let u = utt("a b c", "O B-x I-x");
        let (v, l) = build_vocab(std::slice::from_ref(&u)).unwrap();
        let b = encode_batch(&[u], 5, &v, &l).unwrap();
        assert_eq!(b.token_ids, [2, 3, 4, PAD, PAD]);
        assert_eq!(b.tag_ids[3..], [l.pad_tag(), l.pad_tag()]);
        assert_eq!(b.lengths, [3]);
        assert_eq!(b.truncated, 0);
    }

    #[test]
    fn unseen_token_maps_to_unk() {
        let (v, l) = build_vocab(&[utt("a", "O")]).unwrap();
        let b = encode_batch(&[utt("zzz", "O")], 2, &v, &l).unwrap();
        assert_eq!(b.token_ids[0], UNK);
    }

    #[test]
    fn long_utterance_truncated_and_counted() {
        let toks: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let u = TaggedUtterance::new(toks, vec!["O".into(); 60], "i").unwrap();
        let (v, l) = build_vocab(std::slice::from_ref(&u)).unwrap();
        let b = encode_batch(&[u], 50, &v, &l).unwrap();
        assert_eq!(b.lengths, [50]);
        assert_eq!(b.truncated, 1);
        assert_eq!(b.token_ids.len(), 50);
    }

    #[test]
    fn zero_length_rejected() {
        let (v, l) = build_vocab(&[utt("a", "O")]).unwrap();
        assert!(encode_batch(&[], 0, &v, &l).is_err());
    }
}
