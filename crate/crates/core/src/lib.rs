//! Multiview facial action unit baseline.
//!
//! Landmark sequences are registered to a point-distribution shape model,
//! frontalized, and turned into 158 geometric features per frame. Per-AU
//! linear-chain models (a two-state CRF for occurrence, a six-state ordinal
//! CRF for intensity) label 90-frame windows, and overlapping window
//! predictions are fused per frame. The [`metrics`] module implements the
//! challenge scores and [`synth`] generates a multiview landmark dataset to
//! exercise the whole chain.

pub mod data;
pub mod error;
pub mod features;
pub mod graphical;
pub mod metrics;
pub mod pipeline;
pub mod shape;
pub mod synth;

pub use data::{
    AuLabels, DatasetManifest, LandmarkFrame, LandmarkSequence, ManifestEntry, Partition, Point,
    ViewId, ViewOrder, INTENSITY_AUS, OCCURRENCE_AUS, UNLABELED,
};
pub use error::{Error, Result};
pub use features::{FeatureSelection, FeatureVector, N_FEATURES};
pub use graphical::{CorfParams, CrfParams, WindowPrediction};
pub use metrics::{Measure, ScoreTable};
pub use pipeline::{FusedPrediction, ModelBundle, PipelineConfig, SequencePrediction, Task, WindowSpec};
pub use shape::{ShapeModel, ShapeParams};
