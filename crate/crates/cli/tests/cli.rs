use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn aupose(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aupose"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A config small enough for a few-second run; `output_dir` is relative to
/// the config file.
fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("tiny.json");
    let json = format!(
        r#"{{
  "output_dir": "out",
  "synth": {{
    "subjects": {{ "train": 3, "development": 1, "test": 1 }},
    "tasks": [{{ "name": "T1", "n_frames": 240,
      "au_activity": {{ "1": 0.3, "4": 0.3, "6": 0.3, "7": 0.3, "10": 0.3, "12": 0.3, "14": 0.3, "15": 0.3, "17": 0.3, "23": 0.3 }},
      "noise": 0.003, "head_motion": 5.0 }}]
  }}{extra}
}}"#
    );
    fs::write(&path, json).unwrap();
    path
}

struct Trained {
    dir: tempfile::TempDir,
    config: PathBuf,
}

fn trained() -> &'static Trained {
    static RUN: OnceLock<Trained> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = write_config(dir.path(), "");
        let out = aupose(&config, &["run"]);
        assert!(out.status.success(), "{}", stderr(&out));
        Trained { dir, config }
    })
}

#[test]
fn run_writes_every_artifact_with_a_config_snapshot() {
    let t = trained();
    let out = t.dir.path().join("out");
    for f in [
        "data/train.json",
        "data/development.json",
        "data/test.json",
        "models/shape_model.json",
        "models/bundle.json",
        "models/occ_AU23.json",
        "models/int_AU17.json",
        "scores/development.json",
        "reports/development.md",
        "reports/test.csv",
        "reports/summary.md",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    for d in ["data", "models", "predictions", "scores", "reports"] {
        assert!(out.join(d).join("resolved_config.json").is_file(), "no snapshot in {d}");
    }
    let n_pred = fs::read_dir(out.join("predictions/test")).unwrap().count();
    assert_eq!(n_pred, 9);
}

#[test]
fn evaluate_and_report_are_repeatable() {
    let t = trained();
    let out = t.dir.path().join("out");
    let read = |f: &str| fs::read(out.join(f)).unwrap();
    let before = (read("scores/test.json"), read("reports/test.md"), read("reports/test.csv"));
    assert!(aupose(&t.config, &["evaluate"]).status.success());
    assert!(aupose(&t.config, &["report"]).status.success());
    let after = (read("scores/test.json"), read("reports/test.md"), read("reports/test.csv"));
    assert!(before == after);
}

#[test]
fn a_missing_au_model_is_named() {
    let t = trained();
    let copy = tempfile::tempdir().unwrap();
    let models = copy.path().join("models");
    fs::create_dir_all(&models).unwrap();
    for e in fs::read_dir(t.dir.path().join("out/models")).unwrap() {
        let e = e.unwrap();
        if e.file_name() != "int_AU6.json" {
            fs::copy(e.path(), models.join(e.file_name())).unwrap();
        }
    }
    let data = t.dir.path().join("out/data");
    let config = copy.path().join("c.json");
    fs::write(
        &config,
        format!(r#"{{ "output_dir": "{}", "data_dir": "{}" }}"#, copy.path().display(), data.display()),
    )
    .unwrap();
    let out = aupose(&config, &["predict"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("AU6"), "{}", stderr(&out));
}

#[test]
fn dry_run_validates_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = aupose(&config, &["--dry-run", "run"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let plan = String::from_utf8_lossy(&out.stdout);
    for step in ["synth:", "train-shape:", "train:", "predict:", "evaluate:", "report:"] {
        assert!(plan.contains(step), "{plan}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn every_config_problem_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#", "pipeline": { "window": { "length": 0, "stride": 30 }, "l2": -1.0, "training_views": [12] }"#,
    );
    let out = aupose(&config, &["--dry-run", "train"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("l2"), "{err}");
    assert!(err.contains("window") || err.contains("length"), "{err}");
    assert!(err.contains("12"), "{err}");
    assert!(err.matches("\n  - ").count() >= 3, "{err}");
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#", "pipline": {}"#);
    let out = aupose(&config, &["--dry-run", "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("pipline"), "{}", stderr(&out));
}

#[test]
fn missing_inputs_are_reported_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = aupose(&config, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("train manifest not found"), "{err}");
    assert!(err.contains("shape model not found"), "{err}");
    assert!(!dir.path().join("out").exists());
}
