use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::corpus::TaggedUtterance;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id bijection. Ids 0 and 1 are always padding and unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from(vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()])
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Insert a (lowercased) token; returns its id.
    pub fn insert(&mut self, token: &str) -> usize {
        let t = token.to_lowercase();
        if let Some(&id) = self.index.get(&t) {
            return id;
        }
        let id = self.tokens.len();
        self.index.insert(t.clone(), id);
        self.tokens.push(t);
        id
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(&token.to_lowercase()).copied()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_well_formed(&self) -> bool {
        self.tokens.len() >= 2
            && self.tokens[PAD] == PAD_TOKEN
            && self.tokens[UNK] == UNK_TOKEN
            && self.index.len() == self.tokens.len()
            && self
                .tokens
                .iter()
                .enumerate()
                .all(|(i, t)| self.index.get(t) == Some(&i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for LabelSet {
    fn from(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        LabelSet { names, index }
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(v: LabelSet) -> Self {
        v.names
    }
}

impl LabelSet {
    fn insert(&mut self, name: &str) {
        if !self.index.contains_key(name) {
            self.index.insert(name.to_string(), self.names.len());
            self.names.push(name.to_string());
        }
    }
}

/// Intent and slot-tag id maps, dense from 0 in first-occurrence order.
///
/// Slot tags occupy ids `0..n_tags()`; the padding tag is `n_tags()` and an
/// unseen tag maps to `n_tags() + 1`. Unseen intents map to `n_intents()`.
/// Neither sentinel is ever predicted, so they never count as correct.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelMaps {
    intents: LabelSet,
    tags: LabelSet,
}

impl LabelMaps {
    pub fn from_names(intents: Vec<String>, tags: Vec<String>) -> Self {
        LabelMaps {
            intents: intents.into(),
            tags: tags.into(),
        }
    }

    pub fn n_intents(&self) -> usize {
        self.intents.names.len()
    }

    /// Number of real slot tags, excluding the padding tag.
    pub fn n_tags(&self) -> usize {
        self.tags.names.len()
    }

    pub fn pad_tag(&self) -> usize {
        self.n_tags()
    }

    pub fn unknown_tag(&self) -> usize {
        self.n_tags() + 1
    }

    pub fn unknown_intent(&self) -> usize {
        self.n_intents()
    }

    pub fn intent_id(&self, name: &str) -> Option<usize> {
        self.intents.index.get(name).copied()
    }

    pub fn tag_id(&self, name: &str) -> Option<usize> {
        self.tags.index.get(name).copied()
    }

    pub fn intent_name(&self, id: usize) -> Option<&str> {
        self.intents.names.get(id).map(String::as_str)
    }

    pub fn tag_name(&self, id: usize) -> Option<&str> {
        self.tags.names.get(id).map(String::as_str)
    }

    pub fn intents(&self) -> &[String] {
        &self.intents.names
    }

    pub fn tags(&self) -> &[String] {
        &self.tags.names
    }
}

/// Vocabulary and label maps from a training split.
pub fn build_vocab(train: &[TaggedUtterance]) -> Result<(Vocabulary, LabelMaps)> {
    if train.is_empty() {
        return Err(Error::Empty("build_vocab"));
    }
    let mut vocab = Vocabulary::default();
    let mut labels = LabelMaps::default();
    for u in train {
        for t in &u.tokens {
            vocab.insert(t);
        }
        labels.intents.insert(&u.intent);
        for t in &u.tags {
            labels.tags.insert(t);
        }
    }
    Ok((vocab, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(tokens: &str, tags: &str, intent: &str) -> TaggedUtterance {
        TaggedUtterance::parse(tokens, tags, intent).unwrap()
    }

    #[test]
    fn builds_from_single_utterance() {
        let (v, l) = build_vocab(&[utt("show flights", "O O", "atis_flight")]).unwrap();
        assert_eq!(v.tokens(), ["<pad>", "<unk>", "show", "flights"]);
        assert_eq!(v.len(), 4);
        assert_eq!(l.n_intents(), 1);
        assert_eq!(l.n_tags(), 1);
        assert_eq!(l.pad_tag(), 1);
        assert!(v.is_well_formed());
    }

    #[test]
    fn duplicates_and_case_collapse() {
        let (v, _) = build_vocab(&[utt("show show Show", "O O O", "x")]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("SHOW"), 2);
        assert_eq!(v.id("boston"), UNK);
    }

    #[test]
    fn first_occurrence_order() {
        let (_, l) = build_vocab(&[
            utt("a b", "B-y O", "second"),
            utt("c", "B-x", "first"),
            utt("d", "O", "second"),
        ])
        .unwrap();
        assert_eq!(l.intents(), ["second", "first"]);
        assert_eq!(l.tags(), ["B-y", "O", "B-x"]);
        assert_eq!(l.unknown_tag(), 4);
    }

    #[test]
    fn empty_split_rejected() {
        assert!(build_vocab(&[]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let (v, l) = build_vocab(&[utt("a b", "B-y O", "i")]).unwrap();
        let v2: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        let l2: LabelMaps = serde_json::from_str(&serde_json::to_string(&l).unwrap()).unwrap();
        assert_eq!(v, v2);
        assert_eq!(l, l2);
    }
}
