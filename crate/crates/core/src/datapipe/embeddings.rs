use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Pretrained,
    Random,
    Padding,
}

/// Initial word-vector matrix, one row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub matrix: Tensor<T>,
    pub sources: Vec<RowSource>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Every row random except the zero padding row.
    pub fn random(vocab: &Vocabulary, dim: usize, range: f64, seed: u64) -> Self {
        let sources = vec![RowSource::Random; vocab.len()];
        Self::fill(vocab, dim, range, seed, vec![None; vocab.len()], sources)
    }

    fn fill(
        vocab: &Vocabulary,
        dim: usize,
        range: f64,
        seed: u64,
        rows: Vec<Option<Vec<f64>>>,
        mut sources: Vec<RowSource>,
    ) -> Self {
        let mut data = Vec::with_capacity(vocab.len() * dim);
        for (id, row) in rows.into_iter().enumerate() {
            if id == PAD {
                data.extend(std::iter::repeat_n(T::zero(), dim));
                sources[id] = RowSource::Padding;
                continue;
            }
            match row {
                Some(v) => data.extend(v.into_iter().map(T::of)),
                None => {
                    // per-row stream: a row's init depends only on (seed, id)
                    let mut r = rng::stream(seed, Purpose::UnseenWords, id as u64);
                    data.extend((0..dim).map(|_| T::of(r.random_range(-range..range))));
                }
            }
        }
        EmbeddingTable {
            matrix: Tensor::new(&[vocab.len(), dim], data).expect("row count matches vocabulary"),
            sources,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.last_dim()
    }

    pub fn pretrained_rows(&self) -> usize {
        self.sources
            .iter()
            .filter(|s| **s == RowSource::Pretrained)
            .count()
    }

    pub fn random_rows(&self) -> usize {
        self.sources
            .iter()
            .filter(|s| **s == RowSource::Random)
            .count()
    }
}

/// Read GloVe-style text vectors for the words in `vocab`.
///
/// Each line is a word followed by exactly `dim` numbers. A few published
/// files contain words with internal spaces; those are accepted when the
/// extra leading fields are not numbers. An exact-case match takes
/// precedence over a lowercased one. Rows with no match are drawn
/// uniformly from `(-range, range)` under `seed`.
pub fn load_embeddings<T: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    range: f64,
    seed: u64,
) -> Result<EmbeddingTable<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let mut exact = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = |n: usize| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("expected {dim} vector components, found {n}"),
        };
        if fields.len() < dim + 1 {
            return Err(bad(fields.len() - 1));
        }
        let split = fields.len() - dim;
        if split > 1 && fields[1].parse::<f64>().is_ok() {
            return Err(bad(fields.len() - 1));
        }
        let word = if split == 1 {
            fields[0].to_string()
        } else {
            fields[..split].join(" ")
        };
        let (id, is_exact) = match vocab.get(&word) {
            Some(id) => (id, vocab.token(id) == Some(word.as_str())),
            None => continue,
        };
        if exact[id] || (rows[id].is_some() && !is_exact) {
            continue;
        }
        let v: Vec<f64> = fields[split..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("bad vector component: {e}"),
            })?;
        rows[id] = Some(v);
        exact[id] = is_exact;
    }
    let sources = rows
        .iter()
        .map(|r| {
            if r.is_some() {
                RowSource::Pretrained
            } else {
                RowSource::Random
            }
        })
        .collect();
    Ok(EmbeddingTable::fill(vocab, dim, range, seed, rows, sources))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::default();
        for w in words {
            v.insert(w);
        }
        v
    }

    fn glove(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn line(word: &str, dim: usize, base: f64) -> String {
        let nums: Vec<String> = (0..dim)
            .map(|i| format!("{}", base + i as f64 * 0.001))
            .collect();
        format!("{word} {}", nums.join(" "))
    }

    #[test]
    fn copies_matched_rows_and_zeroes_padding() {
        let v = vocab(&["show"]);
        let f = glove(&[line("other", 300, 0.5), line("show", 300, 1.0)]);
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), &v, 300, 0.25, 7).unwrap();
        assert_eq!(t.matrix.shape(), &[3, 300]);
        let row2 = &t.matrix.data()[600..900];
        assert_eq!(row2[0], 1.0);
        assert!((row2[299] - 1.299).abs() < 1e-12);
        assert!(t.matrix.data()[..300].iter().all(|&x| x == 0.0));
        assert_eq!(t.pretrained_rows(), 1);
        assert_eq!(t.random_rows(), 1);
    }

    #[test]
    fn unseen_rows_are_bounded_and_reproducible() {
        let v = vocab(&["absent"]);
        let f = glove(&[line("show", 300, 1.0)]);
        let a: EmbeddingTable<f32> = load_embeddings(f.path(), &v, 300, 0.25, 7).unwrap();
        let b: EmbeddingTable<f32> = load_embeddings(f.path(), &v, 300, 0.25, 7).unwrap();
        let row = &a.matrix.data()[600..900];
        assert!(row.iter().all(|&x| x > -0.25 && x < 0.25));
        assert_eq!(a, b);
        let c: EmbeddingTable<f32> = load_embeddings(f.path(), &v, 300, 0.25, 8).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn wrong_component_count_reports_line() {
        let v = vocab(&["show"]);
        let f = glove(&[line("a", 300, 0.0), line("show", 299, 0.0)]);
        match load_embeddings::<f64>(f.path(), &v, 300, 0.25, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = glove(&[line("show", 301, 0.0)]);
        assert!(matches!(
            load_embeddings::<f64>(f.path(), &v, 300, 0.25, 1),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn multi_word_entries_and_case_preference() {
        let v = vocab(&["show"]);
        let f = glove(&[
            line(". . .", 4, 9.0),
            line("Show", 4, 2.0),
            line("show", 4, 3.0),
            line("SHOW", 4, 4.0),
        ]);
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), &v, 4, 0.25, 1).unwrap();
        assert_eq!(t.matrix.data()[8], 3.0);
    }

    #[test]
    fn missing_file_is_io_error() {
        let v = vocab(&[]);
        assert!(matches!(
            load_embeddings::<f64>(Path::new("/nonexistent/glove.txt"), &v, 300, 0.25, 1),
            Err(Error::Io { .. })
        ));
    }
}
