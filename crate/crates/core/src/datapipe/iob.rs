use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled span `[start, end)` of token positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Tag<'a> {
    pub fn parse(s: &'a str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (prefix, name) = s
            .split_at_checked(2)
            .ok_or_else(|| Error::MalformedTag(s.to_string()))?;
        if name.is_empty() {
            return Err(Error::MalformedTag(s.to_string()));
        }
        match prefix {
            "B-" => Ok(Tag::Begin(name)),
            "I-" => Ok(Tag::Inside(name)),
            _ => Err(Error::MalformedTag(s.to_string())),
        }
    }
}

pub fn is_valid_tag(s: &str) -> bool {
    Tag::parse(s).is_ok()
}

/// Maximal chunks of an IOB sequence.
///
/// An `I-x` that does not continue an open `x` chunk opens a new one, as if
/// it were `B-x`.
pub fn parse_iob<S: AsRef<str>>(tags: &[S]) -> Result<Vec<ChunkSpan>> {
    Ok(parse_iob_counting(tags)?.0)
}

/// [`parse_iob`] plus the number of stray `I-` tags that were repaired.
pub fn parse_iob_counting<S: AsRef<str>>(tags: &[S]) -> Result<(Vec<ChunkSpan>, usize)> {
    let mut chunks = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    let mut repaired = 0;
    for (i, t) in tags.iter().enumerate() {
        let tag = Tag::parse(t.as_ref())?;
        match tag {
            Tag::Outside => {
                if let Some((label, start)) = open.take() {
                    chunks.push(span(label, start, i));
                }
            }
            Tag::Begin(name) => {
                if let Some((label, start)) = open.take() {
                    chunks.push(span(label, start, i));
                }
                open = Some((name, i));
            }
            Tag::Inside(name) => match open {
                Some((label, _)) if label == name => {}
                _ => {
                    if let Some((label, start)) = open.take() {
                        chunks.push(span(label, start, i));
                    }
                    repaired += 1;
                    open = Some((name, i));
                }
            },
        }
    }
    if let Some((label, start)) = open {
        chunks.push(span(label, start, tags.len()));
    }
    Ok((chunks, repaired))
}

fn span(label: &str, start: usize, end: usize) -> ChunkSpan {
    ChunkSpan {
        label: label.to_string(),
        start,
        end,
    }
}

/// Canonical tags for `chunks` over `len` positions: `B-x` then `I-x`.
pub fn tags_from_chunks(chunks: &[ChunkSpan], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for c in chunks {
        for (k, t) in tags[c.start..c.end].iter_mut().enumerate() {
            *t = if k == 0 {
                format!("B-{}", c.label)
            } else {
                format!("I-{}", c.label)
            };
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(label: &str, start: usize, end: usize) -> ChunkSpan {
        span(label, start, end)
    }

    #[test]
    fn sample_flight_utterance() {
        let tags = [
            "O",
            "O",
            "O",
            "B-fromloc.city_name",
            "O",
            "B-toloc.city_name",
            "I-toloc.city_name",
            "O",
            "B-depart_time.start_time",
            "I-depart_time.start_time",
            "O",
            "B-depart_time.end_time",
            "I-depart_time.end_time",
            "O",
            "B-depart_date.day_name",
        ];
        assert_eq!(
            parse_iob(&tags).unwrap(),
            vec![
                c("fromloc.city_name", 3, 4),
                c("toloc.city_name", 5, 7),
                c("depart_time.start_time", 8, 10),
                c("depart_time.end_time", 11, 13),
                c("depart_date.day_name", 14, 15),
            ]
        );
    }

    #[test]
    fn all_outside_is_empty() {
        assert!(parse_iob(&["O", "O", "O"]).unwrap().is_empty());
    }

    #[test]
    fn single_chunk() {
        assert_eq!(
            parse_iob(&["B-x", "I-x", "I-x"]).unwrap(),
            vec![c("x", 0, 3)]
        );
    }

    #[test]
    fn stray_inside_is_repaired() {
        let (chunks, repaired) =
            parse_iob_counting(&["O", "I-x", "I-x", "I-y", "B-y", "I-y"]).unwrap();
        assert_eq!(chunks, vec![c("x", 1, 3), c("y", 3, 4), c("y", 4, 6)]);
        assert_eq!(repaired, 2);
    }

    #[test]
    fn malformed_tags_rejected() {
        for bad in ["", "B-", "X-foo", "b-foo", "Bfoo", "I"] {
            assert!(parse_iob(&[bad]).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn chunks_to_tags() {
        let tags = tags_from_chunks(&[c("a", 1, 3)], 4);
        assert_eq!(tags, ["O", "B-a", "I-a", "O"]);
    }
}
