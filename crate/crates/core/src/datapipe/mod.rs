//! Corpus loading, vocabularies, IOB chunking, word vectors, and batching.

mod batch;
mod corpus;
mod embeddings;
mod iob;
mod synthetic;
mod vocab;

pub use batch::{encode_batch, Batch};
pub use corpus::{
    load_dataset, load_split, write_dataset, write_split, Dataset, Split, TaggedUtterance,
};
pub use embeddings::{load_embeddings, EmbeddingTable, RowSource};
pub use iob::{is_valid_tag, parse_iob, parse_iob_counting, tags_from_chunks, ChunkSpan, Tag};
pub use synthetic::tiny_corpus;
pub use vocab::{build_vocab, LabelMaps, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
