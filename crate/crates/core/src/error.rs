use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}, row {row}: expected {expected} landmark columns, found {found}")]
    PointCount {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("label file {path} has {labels} rows but the sequence has {frames} frames")]
    LengthMismatch {
        path: PathBuf,
        labels: usize,
        frames: usize,
    },

    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("views of subject {subject}, task {task} disagree on labels ({first} vs {other})")]
    ViewLabelsDisagree {
        subject: String,
        task: String,
        first: PathBuf,
        other: PathBuf,
    },

    #[error("shape corpus has {found} distinct shapes, at least {required} are required")]
    CorpusTooSmall { found: usize, required: usize },

    #[error("shape corpus is rank deficient: attained rank {rank}, {required} components requested")]
    RankDeficient { rank: usize, required: usize },

    #[error("feature selection needs at least two distinct label values")]
    ConstantLabels,

    #[error("expected {expected} features, found {found}")]
    FeatureDimension { expected: usize, found: usize },

    #[error("label {label} out of range for a {states}-state model (window {window})")]
    LabelOutOfRange {
        label: usize,
        states: usize,
        window: usize,
    },

    #[error("non-finite objective during training (window {window})")]
    NonFiniteObjective { window: usize },

    #[error("no training data for {0}")]
    NoTrainingData(String),

    #[error("no manifest entries for training views {0:?}")]
    NoTrainingViews(Vec<u8>),

    #[error("model bundle is missing the model for {0}")]
    MissingModel(String),

    #[error("frame {0} is not covered by any window")]
    Uncovered(usize),

    #[error("metric inputs differ in length ({0} vs {1})")]
    MetricLength(usize, usize),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with a description of the work item that failed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
