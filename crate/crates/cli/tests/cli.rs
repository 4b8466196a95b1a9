use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slufuse::datapipe::{tiny_corpus, write_dataset};
use slufuse::modeltrain::{ModelConfig, Variant};

fn slufuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slufuse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_setup(dir: &Path) {
    write_dataset(&dir.join("tiny"), &tiny_corpus(4)).unwrap();
    let mut c = ModelConfig::for_variant(Variant::Model2b);
    c.embed_dim = 16;
    c.max_len = 8;
    c.hidden = 16;
    c.features = 16;
    c.conv_filters = 8;
    c.mlb_rank = 4;
    c.mlb_out = 16;
    c.learning_rate = 0.01;
    c.batch_size = 5;
    c.max_epochs = 60;
    c.patience = 60;
    fs::write(dir.join("tiny.cfg"), c.to_text()).unwrap();
}

#[test]
fn gradcheck_passes() {
    let out = slufuse(&["gradcheck"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("model2b joint loss"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn usage_errors_exit_with_2() {
    let out = slufuse(&["train", "--data-dir", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("--config"));
    assert_eq!(slufuse(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        slufuse(&[
            "eval",
            "--checkpoint",
            "c",
            "--data-dir",
            "d",
            "--split",
            "holdout",
            "--metrics-out",
            "m"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn train_eval_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_setup(d);
    let run = d.join("run");
    let out = slufuse(&[
        "train",
        "--config",
        s(&d.join("tiny.cfg")),
        "--data-dir",
        s(&d.join("tiny")),
        "--set",
        "seed=2",
        "--out",
        s(&run),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for f in ["config.txt", "model.sluf", "history.json", "metrics.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    assert!(fs::read_to_string(run.join("config.txt"))
        .unwrap()
        .contains("seed = 2"));

    let metrics = d.join("eval/test.json");
    let out = slufuse(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.sluf")),
        "--data-dir",
        s(&d.join("tiny")),
        "--split",
        "test",
        "--metrics-out",
        s(&metrics),
        "--model",
        "model2b",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(report["split"], "test");
    assert_eq!(report["intent_accuracy"], 1.0);
    assert_eq!(report["slot_token_accuracy"], 1.0);

    let out = slufuse(&[
        "predict",
        "--checkpoint",
        s(&run.join("model.sluf")),
        "--text",
        "i need a ticket to new york",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "intent\tbook_flight");
    assert_eq!(&lines[5..], ["to\tO", "new\tB-city", "york\tI-city"]);

    // the wrong variant is refused
    let out = slufuse(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.sluf")),
        "--data-dir",
        s(&d.join("tiny")),
        "--split",
        "test",
        "--metrics-out",
        s(&metrics),
        "--model",
        "model1a",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_1_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = slufuse(&[
        "predict",
        "--checkpoint",
        s(&dir.path().join("none.sluf")),
        "--text",
        "hi",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "));
}
