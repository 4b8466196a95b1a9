//! Metrics, checkpoint evaluation, the gradient-check suite, and the
//! comparison tables.

mod evaluate;
mod gradsuite;
mod metrics;
mod tables;

pub use evaluate::{
    env_threads, evaluate_checkpoint, evaluate_model, score_split, with_threads, SplitScore,
    EVAL_BATCH,
};
pub use gradsuite::{gradcheck_suite, toy_config, GradCase, STEP, TOLERANCE};
pub use metrics::{
    chunk_counts, chunk_prf, intent_accuracy, token_accuracy, ChunkCounts, MetricsReport, Prf,
    ReportCounts, TokenCounts,
};
pub use tables::{
    reproduce_tables, write_table, ComparisonTable, Corpus, Provenance, ReproduceOptions, TableRow,
    TableSection, TABLE3_QUOTED, TABLE4_QUOTED, TABLE5_QUOTED,
};
