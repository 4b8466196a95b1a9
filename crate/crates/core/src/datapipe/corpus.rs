use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::iob::is_valid_tag;
use crate::error::{Error, Result};

/// One training example: tokens, their aligned IOB tags, and an intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedUtterance {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
    pub intent: String,
}

impl TaggedUtterance {
    pub fn new(tokens: Vec<String>, tags: Vec<String>, intent: impl Into<String>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("empty utterance".into()));
        }
        if let Some(bad) = tags.iter().find(|t| !is_valid_tag(t)) {
            return Err(Error::MalformedTag(bad.clone()));
        }
        Ok(TaggedUtterance {
            tokens,
            tags,
            intent: intent.into(),
        })
    }

    /// Build from whitespace-separated token and tag strings.
    pub fn parse(tokens: &str, tags: &str, intent: &str) -> Result<Self> {
        Self::new(
            tokens.split_whitespace().map(str::to_string).collect(),
            tags.split_whitespace().map(str::to_string).collect(),
            intent.trim(),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.dir_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub train: Vec<TaggedUtterance>,
    pub valid: Vec<TaggedUtterance>,
    pub test: Vec<TaggedUtterance>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[TaggedUtterance] {
        match s {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines: Vec<String> = text
        .lines()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect();
    // a trailing blank line is an artefact of the final newline, not an utterance
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

/// Read one `<dir>/{seq.in,seq.out,label}` triple.
pub fn load_split(dir: &Path) -> Result<Vec<TaggedUtterance>> {
    let paths: [PathBuf; 3] = ["seq.in", "seq.out", "label"].map(|f| dir.join(f));
    let [tokens, tags, labels] = [&paths[0], &paths[1], &paths[2]].map(|p| read_lines(p));
    let (tokens, tags, labels) = (tokens?, tags?, labels?);
    if tokens.len() != tags.len() || tokens.len() != labels.len() {
        return Err(Error::Parse {
            path: dir.to_path_buf(),
            line: tokens.len().min(tags.len()).min(labels.len()) + 1,
            msg: format!(
                "line counts differ: seq.in={} seq.out={} label={}",
                tokens.len(),
                tags.len(),
                labels.len()
            ),
        });
    }
    tokens
        .iter()
        .zip(&tags)
        .zip(&labels)
        .enumerate()
        .map(|(i, ((tok, tag), lab))| {
            let line = i + 1;
            let toks: Vec<String> = tok.split_whitespace().map(str::to_string).collect();
            let tgs: Vec<String> = tag.split_whitespace().map(str::to_string).collect();
            let err = |path: &PathBuf, msg: String| Error::Parse {
                path: path.clone(),
                line,
                msg,
            };
            if toks.is_empty() {
                return Err(err(&paths[0], "empty utterance".into()));
            }
            if toks.len() != tgs.len() {
                return Err(err(
                    &paths[1],
                    format!("{} tokens but {} tags", toks.len(), tgs.len()),
                ));
            }
            if let Some(bad) = tgs.iter().find(|t| !is_valid_tag(t)) {
                return Err(err(&paths[1], format!("malformed IOB tag {bad:?}")));
            }
            let intent = lab.trim();
            if intent.is_empty() {
                return Err(err(&paths[2], "empty intent label".into()));
            }
            Ok(TaggedUtterance {
                tokens: toks,
                tags: tgs,
                intent: intent.to_string(),
            })
        })
        .collect()
}

/// Load `<root>/{train,valid,test}`.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for s in Split::ALL {
        let utts = load_split(&root.join(s.dir_name()))?;
        match s {
            Split::Train => ds.train = utts,
            Split::Valid => ds.valid = utts,
            Split::Test => ds.test = utts,
        }
    }
    Ok(ds)
}

/// Write `utts` in the three-file layout under `dir`.
pub fn write_split(dir: &Path, utts: &[TaggedUtterance]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let join = |f: &dyn Fn(&TaggedUtterance) -> String| -> String {
        utts.iter().map(|u| f(u) + "\n").collect()
    };
    let files = [
        ("seq.in", join(&|u| u.tokens.join(" "))),
        ("seq.out", join(&|u| u.tags.join(" "))),
        ("label", join(&|u| u.intent.clone())),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

pub fn write_dataset(root: &Path, ds: &Dataset) -> Result<()> {
    for s in Split::ALL {
        write_split(&root.join(s.dir_name()), ds.split(s))?;
    }
    Ok(())
}
