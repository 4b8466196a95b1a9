use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::evaluate_model;
use super::metrics::MetricsReport;
use crate::datapipe::{load_dataset, Split};
use crate::error::{Error, Result};
use crate::modeltrain::{save_checkpoint, train, ModelConfig, Variant};

/// A published result row: technique, then ATIS intent/slot and Snips
/// intent/slot exactly as printed (`-` where none was given).
type Quoted = (&'static str, [&'static str; 4]);

const MODEL_1A: &str = "CNN/Bi-LSTM with Dense Addition (Model-1a)";
const MODEL_1B: &str = "CNN/Bi-LSTM with MLB Fusion (Model-1b)";
const MODEL_2A: &str = "Bidirectional GRU with Dense Addition (Model-2a)";
const MODEL_2B: &str = "Bidirectional GRU with MLB Fusion (Model-2b)";

pub const TABLE3_QUOTED: [Quoted; 3] = [
    ("Bhasin et al. [20]", ["97.42", "99.54", "98.14", "98.44"]),
    (MODEL_1A, ["97.53", "99.47", "94.14", "98.44"]),
    (MODEL_1B, ["97.54", "99.54", "98.14", "98.49"]),
];

pub const TABLE4_QUOTED: [Quoted; 4] = [
    (MODEL_1A, ["97.53", "99.47", "94.14", "98.44"]),
    (MODEL_1B, ["97.54", "99.54", "98.14", "98.49"]),
    (MODEL_2A, ["97.65", "99.56", "98.14", "98.44"]),
    (MODEL_2B, ["97.76", "99.60", "98.42", "98.74"]),
];

pub const TABLE5_QUOTED: [Quoted; 5] = [
    (
        "Goo et al. [3] (Full Attention)",
        ["93.6", "94.8", "97.0", "88.8"],
    ),
    (
        "Goo et al. [3] (Intent Attention)",
        ["94.1", "95.2", "96.8", "88.3"],
    ),
    ("Wang et al. [4]", ["97.17", "97.76", "-", "-"]),
    ("Bhasin et al. [20]", ["97.42", "99.54", "98.14", "98.44"]),
    ("Model-2b (Best)", ["97.76", "99.60", "98.42", "98.74"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Atis,
    Snips,
}

impl Corpus {
    pub fn name(self) -> &'static str {
        match self {
            Corpus::Atis => "atis",
            Corpus::Snips => "snips",
        }
    }

    /// Padded sequence length used for this corpus.
    pub fn max_len(self) -> usize {
        match self {
            Corpus::Atis => 50,
            Corpus::Snips => 36,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    /// Copied from the published tables.
    Quoted,
    /// Trained and evaluated here; `seed` is `None` for a best-of-seeds row.
    Computed { seed: Option<u64>, seeds: usize },
}

/// One table row. Cells are percentages as text; `slot` columns of computed
/// rows hold token accuracy, and chunk F1 is kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub technique: String,
    pub provenance: Provenance,
    pub atis_intent: String,
    pub atis_slot: String,
    pub snips_intent: String,
    pub snips_slot: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atis_slot_chunk_f1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snips_slot_chunk_f1: Option<String>,
}

impl TableRow {
    fn quoted(q: &Quoted) -> Self {
        TableRow {
            technique: q.0.to_string(),
            provenance: Provenance::Quoted,
            atis_intent: q.1[0].to_string(),
            atis_slot: q.1[1].to_string(),
            snips_intent: q.1[2].to_string(),
            snips_slot: q.1[3].to_string(),
            atis_slot_chunk_f1: None,
            snips_slot_chunk_f1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSection {
    pub title: String,
    pub rows: Vec<TableRow>,
}

/// Literature rows and locally computed rows in the published layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub sections: Vec<TableSection>,
    /// Every individual (dataset, model, seed) evaluation on the test split.
    pub runs: Vec<MetricsReport>,
    /// Training configuration of the first computed run, for reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ModelConfig>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn label(v: Variant) -> &'static str {
    match v {
        Variant::Model1a => MODEL_1A,
        Variant::Model1b => MODEL_1B,
        Variant::Model2a => MODEL_2A,
        Variant::Model2b => MODEL_2B,
    }
}

/// Best run by test intent accuracy, then token accuracy, then lowest seed.
fn best_run<'a>(runs: &[&'a MetricsReport]) -> Option<&'a MetricsReport> {
    runs.iter()
        .copied()
        .fold(None, |best: Option<&MetricsReport>, r| match best {
            Some(b)
                if (b.intent_accuracy, b.slot_token_accuracy)
                    >= (r.intent_accuracy, r.slot_token_accuracy) =>
            {
                Some(b)
            }
            _ => Some(r),
        })
}

fn computed_row(
    technique: String,
    seed: Option<u64>,
    seeds: usize,
    atis: Option<&MetricsReport>,
    snips: Option<&MetricsReport>,
) -> TableRow {
    let cell = |r: Option<&MetricsReport>, f: fn(&MetricsReport) -> f64| {
        r.map(|r| pct(f(r))).unwrap_or_else(|| "-".into())
    };
    TableRow {
        technique,
        provenance: Provenance::Computed { seed, seeds },
        atis_intent: cell(atis, |r| r.intent_accuracy),
        atis_slot: cell(atis, |r| r.slot_token_accuracy),
        snips_intent: cell(snips, |r| r.intent_accuracy),
        snips_slot: cell(snips, |r| r.slot_token_accuracy),
        atis_slot_chunk_f1: atis.map(|r| pct(r.slot_chunk_f1)),
        snips_slot_chunk_f1: snips.map(|r| pct(r.slot_chunk_f1)),
    }
}

impl ComparisonTable {
    /// Assemble the three tables from finished runs. With no runs only the
    /// quoted rows remain.
    pub fn from_runs(runs: Vec<MetricsReport>, seeds: usize, config: Option<ModelConfig>) -> Self {
        let of = |v: Variant, ds: Corpus| -> Vec<&MetricsReport> {
            runs.iter()
                .filter(|r| r.model == v.as_str() && r.dataset == ds.name())
                .collect()
        };
        let best = |v: Variant| {
            let (a, s) = (
                best_run(&of(v, Corpus::Atis)),
                best_run(&of(v, Corpus::Snips)),
            );
            (a.is_some() || s.is_some()).then(|| {
                computed_row(
                    format!("{} (ours, best of {seeds})", label(v)),
                    None,
                    seeds,
                    a,
                    s,
                )
            })
        };
        let section = |title: &str, quoted: &[Quoted], variants: &[Variant]| TableSection {
            title: title.to_string(),
            rows: quoted
                .iter()
                .map(TableRow::quoted)
                .chain(variants.iter().filter_map(|&v| best(v)))
                .collect(),
        };
        let mut sections = vec![
            section(
                "Model-1 with MLB and Dense Addition",
                &TABLE3_QUOTED,
                &[Variant::Model1a, Variant::Model1b],
            ),
            section(
                "Model-2 compared with Model-1",
                &TABLE4_QUOTED,
                &Variant::ALL,
            ),
            section(
                "Comparison with other models",
                &TABLE5_QUOTED,
                &[Variant::Model2b],
            ),
        ];
        let mut per_seed = Vec::new();
        for v in Variant::ALL {
            for seed in 0..seeds as u64 {
                let pick = |ds: Corpus| of(v, ds).into_iter().find(|r| r.seed == seed);
                let (a, s) = (pick(Corpus::Atis), pick(Corpus::Snips));
                if a.is_some() || s.is_some() {
                    per_seed.push(computed_row(
                        format!("{} (ours, seed {seed})", label(v)),
                        Some(seed),
                        seeds,
                        a,
                        s,
                    ));
                }
            }
        }
        if !per_seed.is_empty() {
            sections.push(TableSection {
                title: "Per-seed results".into(),
                rows: per_seed,
            });
        }
        ComparisonTable {
            sections,
            runs,
            config,
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            let _ = writeln!(s, "### {}\n", sec.title);
            s += "| Technique | ATIS Intent | ATIS Slot | Snips Intent | Snips Slot | Source |\n";
            s += "|---|---|---|---|---|---|\n";
            for r in &sec.rows {
                let src = match &r.provenance {
                    Provenance::Quoted => "quoted".to_string(),
                    Provenance::Computed { seed: Some(k), .. } => format!("computed, seed {k}"),
                    Provenance::Computed { seed: None, seeds } => {
                        format!("computed, best of {seeds}")
                    }
                };
                let slot = |v: &str, f1: &Option<String>| match f1 {
                    Some(f) => format!("{v} (chunk F1 {f})"),
                    None => v.to_string(),
                };
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.technique,
                    r.atis_intent,
                    slot(&r.atis_slot, &r.atis_slot_chunk_f1),
                    r.snips_intent,
                    slot(&r.snips_slot, &r.snips_slot_chunk_f1),
                    src
                );
            }
            s += "\n";
        }
        if self
            .sections
            .iter()
            .any(|sec| sec.rows.iter().any(|r| r.provenance != Provenance::Quoted))
        {
            s += "Computed slot columns are token accuracy on the test split; chunk F1 is shown in parentheses.\n";
        }
        s
    }
}

/// What to train and where to put it.
#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    /// Corpus roots, each holding `train/`, `valid/` and `test/`.
    pub datasets: Vec<(Corpus, PathBuf)>,
    pub embeddings: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub seeds: usize,
    /// Settings shared by every run; variant, seed and sequence length are
    /// filled in per run.
    pub base: ModelConfig,
    pub out: PathBuf,
}

/// Train every requested (dataset, variant, seed), score the test split,
/// and write `tables.md` and `tables.json` under `out`.
pub fn reproduce_tables(opts: &ReproduceOptions) -> Result<ComparisonTable> {
    fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    let mut runs = Vec::new();
    let mut first_config = None;
    if opts.seeds > 0 {
        for (ds, root) in &opts.datasets {
            let data =
                load_dataset(root).map_err(|e| e.context(format!("dataset {}", ds.name())))?;
            for &v in &opts.variants {
                for seed in 0..opts.seeds as u64 {
                    let ctx = |e: Error| e.context(format!("{v} on {} seed {seed}", ds.name()));
                    let mut cfg = opts.base.clone();
                    cfg.variant = v;
                    cfg.seed = seed;
                    cfg.max_len = ds.max_len();
                    log::info!("training {v} on {} with seed {seed}", ds.name());
                    let outcome =
                        train::<f32>(&cfg, &data, opts.embeddings.as_deref()).map_err(ctx)?;
                    let report = evaluate_model(&outcome.model, &data.test, ds.name(), Split::Test)
                        .map_err(ctx)?;
                    let dir = run_dir(&opts.out, *ds, v, seed);
                    save_checkpoint(
                        &outcome.model,
                        &outcome.history,
                        Some(outcome.best_epoch),
                        &dir.join("model.sluf"),
                    )
                    .map_err(ctx)?;
                    let json = report.to_json()?;
                    fs::write(dir.join("metrics.json"), &json)
                        .map_err(|e| Error::io(dir.join("metrics.json"), e))?;
                    first_config.get_or_insert(cfg);
                    runs.push(report);
                }
            }
        }
    }
    let table = ComparisonTable::from_runs(runs, opts.seeds, first_config);
    write_table(&table, &opts.out)?;
    Ok(table)
}

fn run_dir(out: &Path, ds: Corpus, v: Variant, seed: u64) -> PathBuf {
    out.join(ds.name())
        .join(v.as_str())
        .join(format!("seed{seed}"))
}

pub fn write_table(table: &ComparisonTable, out: &Path) -> Result<()> {
    let md = out.join("tables.md");
    fs::write(&md, table.to_markdown()).map_err(|e| Error::io(&md, e))?;
    let js = out.join("tables.json");
    fs::write(&js, serde_json::to_string_pretty(table)?).map_err(|e| Error::io(&js, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(model: Variant, dataset: Corpus, seed: u64, intent: f64, tok: f64) -> MetricsReport {
        MetricsReport {
            model: model.as_str().into(),
            dataset: dataset.name().into(),
            split: "test".into(),
            seed,
            intent_accuracy: intent,
            slot_token_accuracy: tok,
            slot_chunk_precision: 0.9,
            slot_chunk_recall: 0.9,
            slot_chunk_f1: 0.9,
            counts: super::super::metrics::ReportCounts {
                utterances: 1,
                tokens: 1,
                gold_chunks: 1,
                predicted_chunks: 1,
                correct_chunks: 1,
            },
        }
    }

    #[test]
    fn no_seeds_gives_only_quoted_rows() {
        let t = ComparisonTable::from_runs(vec![], 0, None);
        assert_eq!(t.sections.len(), 3);
        assert!(t
            .sections
            .iter()
            .flat_map(|s| &s.rows)
            .all(|r| r.provenance == Provenance::Quoted));
        assert_eq!(t.sections[0].rows.len(), 3);
        assert_eq!(t.sections[1].rows.len(), 4);
        assert_eq!(t.sections[2].rows.len(), 5);
    }

    #[test]
    fn best_of_seeds_picks_highest_intent_accuracy() {
        let runs = vec![
            report(Variant::Model2b, Corpus::Atis, 0, 0.95, 0.99),
            report(Variant::Model2b, Corpus::Atis, 1, 0.97, 0.98),
            report(Variant::Model2b, Corpus::Atis, 2, 0.97, 0.97),
        ];
        let t = ComparisonTable::from_runs(runs, 3, None);
        let row = t.sections[2].rows.last().unwrap();
        assert_eq!(
            row.provenance,
            Provenance::Computed {
                seed: None,
                seeds: 3
            }
        );
        assert_eq!(
            (row.atis_intent.as_str(), row.atis_slot.as_str()),
            ("97.00", "98.00")
        );
        assert_eq!(row.snips_intent, "-");
        assert_eq!(t.sections[3].rows.len(), 3);
        assert!(t
            .to_markdown()
            .contains("| Model-2b (Best) | 97.76 | 99.60 | 98.42 | 98.74 | quoted |"));
    }
}
