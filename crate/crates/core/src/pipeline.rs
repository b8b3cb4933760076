//! Training and prediction protocol: fixed-length windows with a stride,
//! class-balanced training windows from the training views, one chain model
//! per AU, and per-frame fusion of overlapping window predictions by maximum
//! window score.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    AuLabels, DatasetManifest, LandmarkSequence, ManifestEntry, ViewId, INTENSITY_AUS,
    MAX_INTENSITY, OCCURRENCE_AUS, UNLABELED,
};
use crate::error::{Error, Result};
use crate::features::{self, FeatureConfig, FeatureSelection, Standardizer};
use crate::graphical::{self, CorfParams, CrfParams, LabeledWindow, Link, TrainConfig, WindowPrediction};
use crate::shape::ShapeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: 90,
            stride: 30,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.stride == 0 || self.stride > self.length {
            return Err(format!(
                "window stride {} must be in 1..={}",
                self.stride, self.length
            ));
        }
        Ok(())
    }
}

/// Windows `[start, end)` starting at 0 and `stride` apart. A final window
/// flush with the end is added when the strided ones leave a tail; a
/// sequence shorter than one window gets a single short window.
pub fn segment(n_frames: usize, spec: WindowSpec) -> Vec<Range<usize>> {
    if n_frames <= spec.length {
        return vec![0..n_frames];
    }
    let mut windows: Vec<Range<usize>> = (0..)
        .map(|k| k * spec.stride)
        .take_while(|&start| start + spec.length <= n_frames)
        .map(|start| start..start + spec.length)
        .collect();
    if windows.last().map_or(true, |w| w.end < n_frames) {
        windows.push(n_frames - spec.length..n_frames);
    }
    windows
}

/// Most frequent observed label; ties go to the smaller label.
pub fn majority_label(labels: &[Option<usize>]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels.iter().flatten() {
        *counts.entry(*l).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (label, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((label, n)),
        })
        .map(|(label, _)| label)
}

/// Undersamples windows so every present class (by majority label) keeps as
/// many windows as the smallest present class. Returns the kept indices in
/// their original order. Windows without any observed label are dropped.
pub fn balance(window_labels: &[Vec<Option<usize>>], seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, labels) in window_labels.iter().enumerate() {
        if let Some(c) = majority_label(labels) {
            by_class.entry(c).or_default().push(i);
        }
    }
    let Some(target) = by_class.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    for members in by_class.values() {
        let mut members = members.clone();
        members.shuffle(&mut rng);
        kept.extend_from_slice(&members[..target]);
    }
    kept.sort_unstable();
    kept
}

pub const DEFAULT_TRAINING_VIEWS: [u8; 2] = [5, 6];

pub fn select_training_views<'a>(
    manifest: &'a DatasetManifest,
    views: &[u8],
) -> Result<Vec<&'a ManifestEntry>> {
    let selected: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| views.contains(&e.view.get()))
        .collect();
    if selected.is_empty() {
        return Err(Error::NoTrainingViews(views.to_vec()));
    }
    Ok(selected)
}

/// Per-frame result of fusing overlapping window predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction {
    pub labels: Vec<usize>,
    /// Score of the window each label was taken from.
    pub scores: Vec<f64>,
    pub coverage: Vec<usize>,
    /// Continuous decision value from the winning window: the posterior of
    /// the positive state for binary models, the posterior mean otherwise.
    pub decision: Vec<f64>,
}

/// For every frame, takes the label of the covering window with the highest
/// score; ties go to the earliest window.
pub fn fuse(windows: &[(Range<usize>, WindowPrediction)], n_frames: usize) -> Result<FusedPrediction> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; n_frames];
    let mut coverage = vec![0; n_frames];
    for (w, (range, pred)) in windows.iter().enumerate() {
        for t in range.clone() {
            coverage[t] += 1;
            match best[t] {
                Some((_, s)) if s >= pred.score => {}
                _ => best[t] = Some((w, pred.score)),
            }
        }
    }
    let mut out = FusedPrediction {
        labels: Vec::with_capacity(n_frames),
        scores: Vec::with_capacity(n_frames),
        coverage,
        decision: Vec::with_capacity(n_frames),
    };
    for (t, b) in best.iter().enumerate() {
        let (w, score) = b.ok_or(Error::Uncovered(t))?;
        let (range, pred) = &windows[w];
        let local = t - range.start;
        let n_states = pred.marginals.len() / pred.labels.len();
        let decision = if n_states == 2 {
            pred.posterior(local, 1)
        } else {
            (0..n_states).map(|s| s as f64 * pred.posterior(local, s)).sum()
        };
        out.labels.push(pred.labels[local]);
        out.scores.push(score);
        out.decision.push(decision);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub training_views: Vec<u8>,
    pub seed: u64,
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub cfs_patience: usize,
    pub features: FeatureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            training_views: DEFAULT_TRAINING_VIEWS.to_vec(),
            seed: 2017,
            l2: 1.0,
            tol: 1e-5,
            max_iter: 200,
            cfs_patience: 5,
            features: FeatureConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Every violation, not only the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.window.validate() {
            v.push(e);
        }
        if self.training_views.is_empty() {
            v.push("training_views is empty".into());
        }
        for view in &self.training_views {
            if ViewId::new(*view).is_none() {
                v.push(format!("training view {view} outside 1..9"));
            }
        }
        if !(self.l2 >= 0.0) {
            v.push(format!("l2 must be >= 0, got {}", self.l2));
        }
        if !(self.tol > 0.0) {
            v.push(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_iter == 0 {
            v.push("max_iter must be >= 1".into());
        }
        if self.cfs_patience == 0 {
            v.push("cfs_patience must be >= 1".into());
        }
        if let Err(e) = self.features.validate() {
            v.push(e);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Occurrence,
    Intensity,
}

impl Task {
    pub fn aus(self) -> &'static [u8] {
        match self {
            Task::Occurrence => &OCCURRENCE_AUS,
            Task::Intensity => &INTENSITY_AUS,
        }
    }

    pub fn n_states(self) -> usize {
        match self {
            Task::Occurrence => 2,
            Task::Intensity => MAX_INTENSITY as usize + 1,
        }
    }

    pub fn prefix(self) -> &'static str {
        match self {
            Task::Occurrence => "occ",
            Task::Intensity => "int",
        }
    }

    pub fn column(self, labels: &AuLabels, index: usize) -> &[u8] {
        match self {
            Task::Occurrence => &labels.occurrence[index],
            Task::Intensity => &labels.intensity[index],
        }
    }

    pub fn model_name(self, au: u8) -> String {
        format!("{}_AU{au}", self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChainParams {
    Crf(CrfParams),
    Corf(CorfParams),
}

/// One trained per-AU model with its feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuModel {
    pub au: u8,
    pub task: Task,
    pub selection: FeatureSelection,
    pub standardization: Standardizer,
    pub params: ChainParams,
    pub link: Option<Link>,
    pub training: TrainConfig,
    pub seed: u64,
    pub training_windows: usize,
    /// Most frequent label over all training frames, for chance baselines.
    pub majority_class: u8,
}

impl AuModel {
    pub fn prepare(&self, row: &[f64]) -> Vec<f64> {
        self.standardization
            .apply(&features::project(row, &self.selection.selected_indices))
    }

    pub fn decode(&self, window: &[Vec<f64>]) -> WindowPrediction {
        match &self.params {
            ChainParams::Crf(p) => graphical::decode(p, window),
            ChainParams::Corf(p) => graphical::decode(p, window),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub shape: ShapeModel,
    pub config: PipelineConfig,
    pub occurrence: Vec<AuModel>,
    pub intensity: Vec<AuModel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleIndex {
    config: PipelineConfig,
    shape_model: String,
    models: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

impl ModelBundle {
    pub fn models(&self, task: Task) -> &[AuModel] {
        match task {
            Task::Occurrence => &self.occurrence,
            Task::Intensity => &self.intensity,
        }
    }

    /// Writes `bundle.json`, `shape_model.json` and one `<occ|int>_AU<n>.json`
    /// per model into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.shape.save(dir.join("shape_model.json"))?;
        let mut names = Vec::new();
        for model in self.occurrence.iter().chain(&self.intensity) {
            let name = format!("{}.json", model.task.model_name(model.au));
            write_json(&dir.join(&name), model)?;
            names.push(name);
        }
        write_json(
            &dir.join("bundle.json"),
            &BundleIndex {
                config: self.config.clone(),
                shape_model: "shape_model.json".into(),
                models: names,
            },
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index: BundleIndex = read_json(&dir.join("bundle.json"))?;
        let shape = ShapeModel::load(dir.join(&index.shape_model))?;
        let load_task = |task: Task| -> Result<Vec<AuModel>> {
            task.aus()
                .iter()
                .map(|&au| {
                    let path = dir.join(format!("{}.json", task.model_name(au)));
                    if !path.is_file() {
                        return Err(Error::MissingModel(format!("AU{au} ({task:?})")));
                    }
                    let model: AuModel = read_json(&path)?;
                    if model.au != au || model.task != task {
                        return Err(Error::parse(&path, "model file describes a different AU"));
                    }
                    Ok(model)
                })
                .collect()
        };
        let occurrence = load_task(Task::Occurrence)?;
        let intensity = load_task(Task::Intensity)?;
        Ok(Self {
            shape,
            config: index.config,
            occurrence,
            intensity,
        })
    }
}

/// Extracted features and labels of one training sequence.
struct TrainingSequence {
    features: Vec<Vec<f64>>,
    labels: AuLabels,
}

fn to_state(label: u8) -> Option<usize> {
    (label != UNLABELED).then_some(label as usize)
}

fn au_seed(seed: u64, task: Task, au: u8) -> u64 {
    let offset = match task {
        Task::Occurrence => 0,
        Task::Intensity => 1000,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset + au as u64)
}

fn train_au(
    sequences: &[TrainingSequence],
    task: Task,
    index: usize,
    config: &PipelineConfig,
) -> Result<AuModel> {
    let au = task.aus()[index];
    let seed = au_seed(config.seed, task, au);
    let mut windows: Vec<(usize, Range<usize>)> = Vec::new();
    let mut window_labels: Vec<Vec<Option<usize>>> = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        let column = task.column(&seq.labels, index);
        for range in segment(seq.features.len(), config.window) {
            window_labels.push(column[range.clone()].iter().map(|&l| to_state(l)).collect());
            windows.push((s, range));
        }
    }
    let majority_class = crate::metrics::majority_class(
        sequences.iter().map(|seq| task.column(&seq.labels, index)),
    );
    let kept = balance(&window_labels, seed);
    if kept.is_empty() {
        return Err(Error::NoTrainingData(task.model_name(au)));
    }

    // Feature selection on the labeled frames of the balanced windows.
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for &k in &kept {
        let (s, range) = &windows[k];
        for (t, label) in range.clone().zip(&window_labels[k]) {
            if let Some(l) = label {
                rows.push(sequences[*s].features[t].clone());
                targets.push(*l as f64);
            }
        }
    }
    let mut selection = features::cfs_select(&rows, &targets, config.cfs_patience)
        .map_err(|e| e.context(task.model_name(au)))?;
    if selection.selected_indices.is_empty() {
        // No feature correlates with the labels; keep the least uninformative one.
        let (r_cf, _) = features::correlations(&rows, &targets);
        let best = (0..r_cf.len()).fold(0, |b, j| if r_cf[j] > r_cf[b] { j } else { b });
        selection.selected_indices = vec![best];
    }
    let projected: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| features::project(r, &selection.selected_indices))
        .collect();
    let standardization = Standardizer::fit(&projected);

    let training: Vec<LabeledWindow> = kept
        .iter()
        .map(|&k| {
            let (s, range) = &windows[k];
            LabeledWindow {
                features: range
                    .clone()
                    .map(|t| {
                        standardization.apply(&features::project(
                            &sequences[*s].features[t],
                            &selection.selected_indices,
                        ))
                    })
                    .collect(),
                labels: window_labels[k].clone(),
            }
        })
        .collect();
    let d = selection.selected_indices.len();
    let train_config = TrainConfig {
        l2: config.l2,
        max_iter: config.max_iter,
        tol: config.tol,
        seed,
    };
    let (params, link) = match task {
        Task::Occurrence => (
            ChainParams::Crf(graphical::train_crf(&training, d, &train_config)?),
            None,
        ),
        Task::Intensity => (
            ChainParams::Corf(graphical::train_corf(&training, task.n_states(), d, &train_config)?),
            Some(Link::Logistic),
        ),
    };
    Ok(AuModel {
        au,
        task,
        selection,
        standardization,
        params,
        link,
        training: train_config,
        seed,
        training_windows: training.len(),
        majority_class,
    })
}

/// Trains the 10 occurrence CRFs and 7 intensity ordinal CRFs on the
/// training views of `manifest`.
pub fn train_all(manifest: &DatasetManifest, shape: &ShapeModel, config: &PipelineConfig) -> Result<ModelBundle> {
    let entries = select_training_views(manifest, &config.training_views)?;
    let sequences: Vec<TrainingSequence> = entries
        .par_iter()
        .map(|entry| {
            let (seq, labels) = manifest.load_entry(entry)?;
            let features = features::extract(&seq, shape, &config.features)
                .into_iter()
                .map(|f| f.into_inner())
                .collect();
            Ok(TrainingSequence { features, labels })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(Task, usize)> = [Task::Occurrence, Task::Intensity]
        .into_iter()
        .flat_map(|task| (0..task.aus().len()).map(move |i| (task, i)))
        .collect();
    let models: Vec<AuModel> = jobs
        .par_iter()
        .map(|&(task, i)| {
            let started = Instant::now();
            let model = train_au(&sequences, task, i, config)?;
            log::info!(
                "trained {} on {} windows, {} features, in {:.2?}",
                task.model_name(model.au),
                model.training_windows,
                model.selection.selected_indices.len(),
                started.elapsed()
            );
            Ok(model)
        })
        .collect::<Result<_>>()?;
    let (occurrence, intensity): (Vec<_>, Vec<_>) =
        models.into_iter().partition(|m| m.task == Task::Occurrence);
    Ok(ModelBundle {
        shape: shape.clone(),
        config: config.clone(),
        occurrence,
        intensity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequencePrediction {
    pub occurrence: Vec<FusedPrediction>,
    pub intensity: Vec<FusedPrediction>,
}

impl SequencePrediction {
    pub fn task(&self, task: Task) -> &[FusedPrediction] {
        match task {
            Task::Occurrence => &self.occurrence,
            Task::Intensity => &self.intensity,
        }
    }
}

/// Predicts every AU for one sequence. Only landmarks are consulted.
pub fn predict_sequence(bundle: &ModelBundle, seq: &LandmarkSequence) -> Result<SequencePrediction> {
    let rows: Vec<Vec<f64>> = features::extract(seq, &bundle.shape, &bundle.config.features)
        .into_iter()
        .map(|f| f.into_inner())
        .collect();
    let ranges = segment(rows.len(), bundle.config.window);
    let run = |model: &AuModel| -> Result<FusedPrediction> {
        let started = Instant::now();
        let prepared: Vec<Vec<f64>> = rows.iter().map(|r| model.prepare(r)).collect();
        let windows: Vec<(Range<usize>, WindowPrediction)> = ranges
            .iter()
            .map(|r| (r.clone(), model.decode(&prepared[r.clone()])))
            .collect();
        let fused = fuse(&windows, rows.len())?;
        log::debug!(
            "{} {}/{}: {:.2?}",
            model.task.model_name(model.au),
            seq.subject_id,
            seq.task_id,
            started.elapsed()
        );
        Ok(fused)
    };
    Ok(SequencePrediction {
        occurrence: bundle.occurrence.iter().map(run).collect::<Result<_>>()?,
        intensity: bundle.intensity.iter().map(run).collect::<Result<_>>()?,
    })
}

/// Predictions for every manifest entry, in manifest order.
pub fn predict_all(manifest: &DatasetManifest, bundle: &ModelBundle) -> Result<Vec<SequencePrediction>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let mut seq = crate::data::load_sequence(manifest.sequence_path(entry))?;
            seq.subject_id = entry.subject.clone();
            seq.task_id = entry.task.clone();
            let started = Instant::now();
            let pred = predict_sequence(bundle, &seq).map_err(|e| {
                e.context(format!("subject {}, task {}, view {}", entry.subject, entry.task, entry.view))
            })?;
            log::info!(
                "predicted {}/{} view {} ({} frames) in {:.2?}",
                entry.subject,
                entry.task,
                entry.view,
                seq.len(),
                started.elapsed()
            );
            Ok(pred)
        })
        .collect()
}

pub fn prediction_header() -> Vec<String> {
    let mut h = Vec::new();
    for task in [Task::Occurrence, Task::Intensity] {
        h.extend(task.aus().iter().map(|au| task.model_name(*au)));
    }
    for task in [Task::Occurrence, Task::Intensity] {
        h.extend(task.aus().iter().map(|au| format!("score_{}", task.model_name(*au))));
    }
    for task in [Task::Occurrence, Task::Intensity] {
        h.extend(task.aus().iter().map(|au| format!("decision_{}", task.model_name(*au))));
    }
    h
}

/// Prediction CSV: labels, winning-window scores, then decision values.
pub fn format_predictions(pred: &SequencePrediction) -> String {
    let mut out = prediction_header().join(",");
    out.push('\n');
    let n = pred.occurrence.first().map_or(0, |f| f.labels.len());
    let all: Vec<&FusedPrediction> = pred.occurrence.iter().chain(&pred.intensity).collect();
    for t in 0..n {
        let mut row: Vec<String> = all.iter().map(|f| f.labels[t].to_string()).collect();
        row.extend(all.iter().map(|f| format!("{}", f.scores[t])));
        row.extend(all.iter().map(|f| format!("{}", f.decision[t])));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_predictions(path: impl AsRef<Path>, pred: &SequencePrediction) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_predictions(pred)).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<SequencePrediction> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let expected = prediction_header();
    if header != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::parse(path, "unexpected prediction header"));
    }
    let n_models = OCCURRENCE_AUS.len() + INTENSITY_AUS.len();
    let mut fused: Vec<FusedPrediction> = (0..n_models)
        .map(|_| FusedPrediction {
            labels: Vec::new(),
            scores: Vec::new(),
            coverage: Vec::new(),
            decision: Vec::new(),
        })
        .collect();
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 * n_models {
            return Err(Error::parse(path, format!("row {} has {} cells", row + 2, cells.len())));
        }
        let bad = |c: &str| Error::parse(path, format!("row {}: bad value {c:?}", row + 2));
        for (m, f) in fused.iter_mut().enumerate() {
            f.labels.push(cells[m].parse().map_err(|_| bad(cells[m]))?);
            f.scores.push(cells[n_models + m].parse().map_err(|_| bad(cells[n_models + m]))?);
            let d = cells[2 * n_models + m];
            f.decision.push(d.parse().map_err(|_| bad(d))?);
            f.coverage.push(0);
        }
    }
    let intensity = fused.split_off(OCCURRENCE_AUS.len());
    Ok(SequencePrediction {
        occurrence: fused,
        intensity,
    })
}
