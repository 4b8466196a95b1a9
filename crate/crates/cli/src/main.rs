use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use slufuse::datapipe::{encode_batch, load_dataset, Split, TaggedUtterance};
use slufuse::evalcli::{
    evaluate_checkpoint, evaluate_model, gradcheck_suite, reproduce_tables, with_threads, Corpus,
    ReproduceOptions,
};
use slufuse::modeltrain::{
    load_checkpoint, save_checkpoint, train, Model, ModelConfig, TrainOutcome, Variant,
};
use slufuse::numcore::{Precision, Scalar};

#[derive(Parser, Debug)]
#[command(
    name = "slufuse",
    version,
    about = "Joint intent classification and slot labelling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write its checkpoint, history and validation metrics.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a corpus.
    Eval(EvalArgs),
    /// Tag a single utterance.
    Predict(PredictArgs),
    /// Run the 64-bit finite-difference gradient suite.
    Gradcheck,
    /// Train and evaluate the model variants and write the comparison tables.
    Reproduce(ReproduceArgs),
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Corpus root holding train/, valid/ and test/.
    #[arg(long)]
    data_dir: PathBuf,
    /// Word vectors in text format; rows are drawn at random without it.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    model: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_parser = parse_split)]
    split: Split,
    #[arg(long)]
    metrics_out: PathBuf,
    /// Refuse a checkpoint of any other variant.
    #[arg(long, value_parser = parse_variant)]
    model: Option<Variant>,
}

#[derive(clap::Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Whitespace-tokenised utterance.
    #[arg(long)]
    text: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Which {
    Atis,
    Snips,
    Both,
}

#[derive(clap::Args, Debug)]
struct ReproduceArgs {
    #[arg(long, value_enum)]
    dataset: Which,
    #[arg(long)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
    /// Directory holding atis/ and snips/.
    #[arg(long, default_value = "data")]
    data_root: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant, default_value = "model1a,model1b,model2a,model2b")]
    models: Vec<Variant>,
    /// Base configuration shared by every run.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: slufuse::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: slufuse::Error| e.to_string())
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn finish_training<T: Scalar>(
    outcome: TrainOutcome<T>,
    data_dir: &Path,
    valid: &[TaggedUtterance],
    out: &Path,
) -> Result<()> {
    let model = &outcome.model;
    save_checkpoint(
        model,
        &outcome.history,
        Some(outcome.best_epoch),
        &out.join("model.sluf"),
    )?;
    write(
        &out.join("history.json"),
        &serde_json::to_string_pretty(&outcome.history)?,
    )?;
    let report =
        with_threads(|| evaluate_model(model, valid, &dataset_name(data_dir), Split::Valid))??;
    write(&out.join("metrics.json"), &report.to_json()?)?;
    print!("{}", report.table());
    println!(
        "best epoch {} of {} ({:?}); {} parameters",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.stop,
        model.parameter_count()
    );
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let mut cfg = ModelConfig::from_file(&a.config)?;
    if let Some(v) = a.model {
        cfg.variant = v;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    let data = load_dataset(&a.data_dir)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write(&a.out.join("config.txt"), &cfg.to_text())?;
    let emb = a.embeddings.as_deref();
    match cfg.precision {
        Precision::F32 => finish_training(
            train::<f32>(&cfg, &data, emb)?,
            &a.data_dir,
            &data.valid,
            &a.out,
        ),
        Precision::F64 => finish_training(
            train::<f64>(&cfg, &data, emb)?,
            &a.data_dir,
            &data.valid,
            &a.out,
        ),
    }
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let report = evaluate_checkpoint(&a.checkpoint, &a.data_dir, a.split, a.model)?;
    if let Some(dir) = a.metrics_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write(&a.metrics_out, &report.to_json()?)?;
    print!("{}", report.table());
    Ok(())
}

fn print_prediction<T: Scalar>(model: &Model<T>, text: &str) -> Result<()> {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        bail!("--text holds no tokens");
    }
    // gold labels are unused; any known tag and intent will do
    let tag = model
        .labels
        .tags()
        .first()
        .cloned()
        .unwrap_or_else(|| "O".into());
    let intent = model.labels.intents().first().cloned().unwrap_or_default();
    let utt = TaggedUtterance::new(tokens.clone(), vec![tag; tokens.len()], intent)?;
    let batch = encode_batch(&[utt], model.config.max_len, &model.vocab, &model.labels)?;
    let pred = model.predict(&batch)?;
    let name = |id: usize| model.labels.intent_name(id).unwrap_or("?");
    println!("intent\t{}", name(pred.intents[0]));
    for (i, tok) in tokens.iter().enumerate() {
        let tag = pred.tags[0]
            .get(i)
            .and_then(|&t| model.labels.tag_name(t))
            .unwrap_or("-");
        println!("{tok}\t{tag}");
    }
    Ok(())
}

fn run_predict(a: PredictArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    match ckpt.precision() {
        Precision::F32 => print_prediction(&ckpt.model::<f32>()?, &a.text),
        Precision::F64 => print_prediction(&ckpt.model::<f64>()?, &a.text),
    }
}

fn run_gradcheck() -> Result<()> {
    let cases = gradcheck_suite()?;
    let mut failed = 0;
    for c in &cases {
        let verdict = if c.report.pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict}  {:<32} max rel err {:.3e}",
            c.name, c.report.max_rel_error
        );
        if !c.report.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} gradient checks failed", cases.len());
    }
    println!("all {} gradient checks passed", cases.len());
    Ok(())
}

fn run_reproduce(a: ReproduceArgs) -> Result<()> {
    let base = match &a.config {
        Some(p) => ModelConfig::from_file(p)?,
        None => ModelConfig::default(),
    };
    let corpora: &[Corpus] = match a.dataset {
        Which::Atis => &[Corpus::Atis],
        Which::Snips => &[Corpus::Snips],
        Which::Both => &[Corpus::Atis, Corpus::Snips],
    };
    let opts = ReproduceOptions {
        datasets: corpora
            .iter()
            .map(|&c| (c, a.data_root.join(c.name())))
            .collect(),
        embeddings: a.embeddings,
        variants: a.models,
        seeds: a.seeds,
        base,
        out: a.out,
    };
    let table = reproduce_tables(&opts)?;
    print!("{}", table.to_markdown());
    Ok(())
}

/// The error chain on one line, skipping causes already spelled out by
/// the message above them.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg += ": ";
            }
            msg += &text;
        }
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
        Command::Gradcheck => run_gradcheck(),
        Command::Reproduce(a) => run_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
