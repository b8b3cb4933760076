use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use aupose_core::pipeline::PipelineConfig;
use aupose_core::synth::SynthConfig;
use aupose_core::Partition;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    /// Every `frame_stride`-th tracked frame of every training sequence
    /// (all views) enters the shape corpus.
    pub frame_stride: usize,
}

impl Default for ShapeSection {
    fn default() -> Self {
        Self { frame_stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub partitions: Vec<Partition>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            partitions: vec![Partition::Development, Partition::Test],
        }
    }
}

/// Everything a run needs. Relative paths resolve against the directory
/// of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Directory holding `train.json`, `development.json` and `test.json`;
    /// defaults to `<output_dir>/data`.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub shape: ShapeSection,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if let Some(d) = &self.data_dir {
            if d.is_relative() {
                self.data_dir = Some(base.join(d));
            }
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.output_dir.join("data"))
    }

    pub fn manifest_path(&self, partition: Partition) -> PathBuf {
        self.data_dir().join(format!("{}.json", partition.name()))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.output_dir.join("features")
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.output_dir.join("predictions")
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.output_dir.join("scores")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }

    /// Every configuration error, not only the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.output_dir.as_os_str().is_empty() {
            v.push("output_dir is empty".into());
        }
        v.extend(self.synth.violations().into_iter().map(|e| format!("synth: {e}")));
        v.extend(self.pipeline.violations().into_iter().map(|e| format!("pipeline: {e}")));
        if self.shape.frame_stride == 0 {
            v.push("shape: frame_stride must be >= 1".into());
        }
        if self.evaluate.partitions.is_empty() {
            v.push("evaluate: partitions is empty".into());
        }
        if self.evaluate.partitions.contains(&Partition::Train) {
            v.push("evaluate: the train partition is not evaluated".into());
        }
        v.dedup();
        v
    }
}
