use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use aupose_core::data::{self, DatasetManifest, ManifestEntry, Partition};
use aupose_core::features::{self, FeatureSidecar, SidecarSelection};
use aupose_core::metrics::{self, EvalSequence, EvaluationReport, Measure};
use aupose_core::pipeline::{self, ModelBundle, Task};
use aupose_core::shape::{self, ShapeModel};
use aupose_core::synth;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::Command;

const SHAPE_MODEL: &str = "shape_model.json";
const SNAPSHOT: &str = "resolved_config.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Creates `dir` and records the resolved configuration next to its outputs.
fn prepare_output(dir: &Path, config: &RunConfig) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(SNAPSHOT), config)
}

fn stem(entry: &ManifestEntry) -> String {
    entry
        .sequence
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("{}_{}_v{}", entry.subject, entry.task, entry.view))
}

fn prediction_path(config: &RunConfig, partition: Partition, entry: &ManifestEntry) -> PathBuf {
    config
        .predictions_dir()
        .join(partition.name())
        .join(format!("{}.pred.csv", stem(entry)))
}

fn scores_path(config: &RunConfig, partition: Partition) -> PathBuf {
    config.scores_dir().join(format!("{}.json", partition.name()))
}

fn require(missing: &mut Vec<String>, path: PathBuf, what: &str) {
    if !path.exists() {
        missing.push(format!("{what} not found: {}", path.display()));
    }
}

/// Inputs that must exist before `command` starts, each missing one listed.
pub fn missing_inputs(command: &Command, config: &RunConfig) -> Vec<String> {
    let mut missing = Vec::new();
    let eval = &config.evaluate.partitions;
    let models = config.models_dir();
    match command {
        Command::Synth { .. } | Command::Run => {}
        Command::TrainShape => require(&mut missing, config.manifest_path(Partition::Train), "train manifest"),
        Command::Extract => {
            for p in eval {
                require(&mut missing, config.manifest_path(*p), "manifest");
            }
            require(&mut missing, models.join(SHAPE_MODEL), "shape model");
        }
        Command::Train { .. } => {
            require(&mut missing, config.manifest_path(Partition::Train), "train manifest");
            require(&mut missing, models.join(SHAPE_MODEL), "shape model");
        }
        Command::Predict | Command::Evaluate => {
            for p in eval {
                require(&mut missing, config.manifest_path(*p), "manifest");
            }
            require(&mut missing, models.join("bundle.json"), "model bundle");
            if matches!(command, Command::Evaluate) {
                for p in eval {
                    require(&mut missing, config.predictions_dir().join(p.name()), "predictions");
                }
            }
        }
        Command::Report => {
            for p in eval {
                require(&mut missing, scores_path(config, *p), "scores");
            }
        }
    }
    missing
}

fn steps(command: &Command) -> Vec<Command> {
    match command {
        Command::Run => vec![
            Command::Synth { seed: None },
            Command::TrainShape,
            Command::Train {
                seed: None,
                training_views: None,
            },
            Command::Predict,
            Command::Evaluate,
            Command::Report,
        ],
        other => vec![other.clone()],
    }
}

/// Human-readable execution plan for `--dry-run`.
pub fn plan(command: &Command, config: &RunConfig) -> String {
    let mut out = String::from("configuration is valid\nplan:\n");
    let eval: Vec<&str> = config.evaluate.partitions.iter().map(|p| p.name()).collect();
    for (i, step) in steps(command).iter().enumerate() {
        let line = match step {
            Command::Synth { .. } => {
                let s = config.synth.subjects;
                format!(
                    "synth: {} train / {} development / {} test subjects, {} task(s), 9 views, seed {} -> {}",
                    s.train,
                    s.development,
                    s.test,
                    config.synth.tasks.len(),
                    config.synth.seed,
                    config.data_dir().display()
                )
            }
            Command::TrainShape => format!(
                "train-shape: every {}th frame of {} -> {}",
                config.shape.frame_stride,
                config.manifest_path(Partition::Train).display(),
                config.models_dir().join(SHAPE_MODEL).display()
            ),
            Command::Extract => format!("extract: {} -> {}", eval.join(", "), config.features_dir().display()),
            Command::Train { .. } => format!(
                "train: 10 occurrence + 7 intensity models on views {:?}, windows {}/{}, seed {} -> {}",
                config.pipeline.training_views,
                config.pipeline.window.length,
                config.pipeline.window.stride,
                config.pipeline.seed,
                config.models_dir().display()
            ),
            Command::Predict => format!("predict: {} -> {}", eval.join(", "), config.predictions_dir().display()),
            Command::Evaluate => format!("evaluate: {} -> {}", eval.join(", "), config.scores_dir().display()),
            Command::Report => format!("report: {} -> {}", eval.join(", "), config.reports_dir().display()),
            Command::Run => unreachable!(),
        };
        let _ = writeln!(out, "  {}. {line}", i + 1);
    }
    out
}

pub fn execute(command: &Command, config: &RunConfig) -> Result<()> {
    for step in steps(command) {
        let started = Instant::now();
        match &step {
            Command::Synth { .. } => run_synth(config)?,
            Command::TrainShape => run_train_shape(config)?,
            Command::Extract => run_extract(config)?,
            Command::Train { .. } => run_train(config)?,
            Command::Predict => run_predict(config)?,
            Command::Evaluate => run_evaluate(config)?,
            Command::Report => run_report(config)?,
            Command::Run => unreachable!(),
        }
        info!("{step:?} finished in {:.2?}", started.elapsed());
    }
    Ok(())
}

fn load_manifest(config: &RunConfig, partition: Partition) -> Result<DatasetManifest> {
    let path = config.manifest_path(partition);
    data::load_manifest(&path).with_context(|| format!("loading {} manifest", partition.name()))
}

fn run_synth(config: &RunConfig) -> Result<()> {
    let dir = config.data_dir();
    prepare_output(&dir, config)?;
    let emitted = synth::emit_dataset(&config.synth, &dir).context("generating the synthetic dataset")?;
    for (partition, manifest) in &emitted.manifests {
        info!("{partition}: {} sequences", manifest.entries.len());
    }
    Ok(())
}

fn run_train_shape(config: &RunConfig) -> Result<()> {
    let manifest = load_manifest(config, Partition::Train)?;
    let stride = config.shape.frame_stride;
    let per_entry: Vec<Vec<Vec<data::Point>>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let seq = data::load_sequence(manifest.sequence_path(entry))?;
            Ok(seq
                .frames
                .iter()
                .step_by(stride)
                .filter(|f| f.tracked())
                .map(|f| f.points().to_vec())
                .collect())
        })
        .collect::<aupose_core::Result<_>>()?;
    let corpus: Vec<Vec<data::Point>> = per_entry.into_iter().flatten().collect();
    info!("shape corpus: {} frames", corpus.len());
    let model = shape::train_shape_model(&corpus, shape::N_NONRIGID).context("training the shape model")?;
    let dir = config.models_dir();
    prepare_output(&dir, config)?;
    model.save(dir.join(SHAPE_MODEL))?;
    Ok(())
}

fn load_shape(config: &RunConfig) -> Result<ShapeModel> {
    let path = config.models_dir().join(SHAPE_MODEL);
    ShapeModel::load(&path).with_context(|| format!("loading {}", path.display()))
}

fn run_extract(config: &RunConfig) -> Result<()> {
    let model = load_shape(config)?;
    let dir = config.features_dir();
    prepare_output(&dir, config)?;
    let mut sidecar = FeatureSidecar::new(&config.pipeline.features);
    if let Ok(bundle) = ModelBundle::load(config.models_dir()) {
        sidecar.selections = bundle
            .occurrence
            .iter()
            .chain(&bundle.intensity)
            .map(|m| SidecarSelection {
                model: m.task.model_name(m.au),
                selected_indices: m.selection.selected_indices.clone(),
                standardization: m.standardization.clone(),
            })
            .collect();
    }
    write_json(&dir.join("features.json"), &sidecar)?;
    for &partition in &config.evaluate.partitions {
        let manifest = load_manifest(config, partition)?;
        let out = dir.join(partition.name());
        create_dir(&out)?;
        manifest.entries.par_iter().try_for_each(|entry| -> Result<()> {
            let seq = data::load_sequence(manifest.sequence_path(entry))?;
            let rows = features::extract(&seq, &model, &config.pipeline.features);
            features::write_matrix(out.join(format!("{}.features.csv", stem(entry))), &rows)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn run_train(config: &RunConfig) -> Result<()> {
    let manifest = load_manifest(config, Partition::Train)?;
    let shape = load_shape(config)?;
    let bundle = pipeline::train_all(&manifest, &shape, &config.pipeline).context("training")?;
    let dir = config.models_dir();
    prepare_output(&dir, config)?;
    bundle.save(&dir)?;
    Ok(())
}

fn load_bundle(config: &RunConfig) -> Result<ModelBundle> {
    ModelBundle::load(config.models_dir()).context("loading the model bundle")
}

fn run_predict(config: &RunConfig) -> Result<()> {
    let bundle = load_bundle(config)?;
    prepare_output(&config.predictions_dir(), config)?;
    for &partition in &config.evaluate.partitions {
        let manifest = load_manifest(config, partition)?;
        create_dir(&config.predictions_dir().join(partition.name()))?;
        let predictions = pipeline::predict_all(&manifest, &bundle)
            .with_context(|| format!("predicting the {partition} partition"))?;
        for (entry, pred) in manifest.entries.iter().zip(&predictions) {
            pipeline::write_predictions(prediction_path(config, partition, entry), pred)?;
        }
    }
    Ok(())
}

fn run_evaluate(config: &RunConfig) -> Result<()> {
    let bundle = load_bundle(config)?;
    let majority: Vec<u8> = bundle.intensity.iter().map(|m| m.majority_class).collect();
    prepare_output(&config.scores_dir(), config)?;
    for &partition in &config.evaluate.partitions {
        let manifest = load_manifest(config, partition)?;
        let sequences: Vec<EvalSequence> = manifest
            .entries
            .par_iter()
            .map(|entry| -> Result<EvalSequence> {
                let (seq, truth) = manifest.load_entry(entry)?;
                let path = prediction_path(config, partition, entry);
                let prediction = pipeline::read_predictions(&path)
                    .with_context(|| format!("reading predictions {}", path.display()))?;
                anyhow::ensure!(
                    prediction.occurrence.iter().all(|f| f.labels.len() == seq.len()),
                    "{} has {} frames but the predictions do not",
                    entry.sequence.display(),
                    seq.len()
                );
                Ok(EvalSequence {
                    view: entry.view,
                    tracked: seq.tracked_count(),
                    truth,
                    prediction,
                })
            })
            .collect::<Result<_>>()?;
        let report = metrics::evaluate(partition.name(), &sequences, &majority)?;
        write_json(&scores_path(config, partition), &report)?;
        if let (Some(f1), Some(icc)) = (report.table(Measure::F1), report.table(Measure::Icc)) {
            info!("{partition}: mean F1 {:?}, mean ICC {:?}", f1.mean, icc.mean);
        }
    }
    Ok(())
}

fn run_report(config: &RunConfig) -> Result<()> {
    let dir = config.reports_dir();
    prepare_output(&dir, config)?;
    let mut reports = Vec::new();
    for &partition in &config.evaluate.partitions {
        let path = scores_path(config, partition);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let report: EvaluationReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let write = |name: String, body: String| {
            fs::write(dir.join(&name), body).with_context(|| format!("writing {name}"))
        };
        write(format!("{}.md", partition.name()), metrics::render_markdown(&report))?;
        write(format!("{}.csv", partition.name()), metrics::render_csv(&report))?;
        reports.push(report);
    }
    fs::write(dir.join("summary.md"), summary(&reports)).context("writing summary.md")?;
    Ok(())
}

/// Side-by-side partitions: AUs as rows, one column per (partition,
/// measure), mean row last.
fn summary(reports: &[EvaluationReport]) -> String {
    let mut out = String::from("# Summary\n");
    for (title, task, measures) in [
        ("Occurrence", Task::Occurrence, &Measure::OCCURRENCE[..]),
        ("Intensity", Task::Intensity, &Measure::INTENSITY[..3]),
    ] {
        let _ = writeln!(out, "\n## {title}\n");
        let mut header = vec!["Action Unit".to_string()];
        let mut columns = Vec::new();
        for r in reports {
            for &m in measures {
                if let Some(t) = r.table(m) {
                    header.push(format!("{} {}", r.partition, m.label()));
                    columns.push(t);
                }
            }
        }
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.3}"));
        for &au in task.aus() {
            let cells: Vec<String> = columns.iter().map(|t| fmt(t.get(au))).collect();
            let _ = writeln!(out, "| AU{au} | {} |", cells.join(" | "));
        }
        let cells: Vec<String> = columns.iter().map(|t| fmt(t.mean)).collect();
        let _ = writeln!(out, "| Mean | {} |", cells.join(" | "));
    }
    out
}
