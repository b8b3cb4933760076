//! Benchmarks for the per-frame and per-window hot paths live in `benches/`.
//! This crate only hosts shared fixtures.

use aupose_core::data::{LandmarkFrame, LandmarkSequence};
use aupose_core::shape::{train_shape_model, ShapeModel, N_NONRIGID};
use aupose_core::synth::{self, RenderNoise, SubjectFace, SynthConfig, TaskProfile, ViewSpec};

/// A small shape model trained on synthetic multiview shapes.
pub fn shape_model() -> ShapeModel {
    let config = SynthConfig::default();
    let corpus: Vec<_> = synth::shape_corpus(&config, 20).into_iter().map(|(p, _, _)| p).collect();
    train_shape_model(&corpus, N_NONRIGID).expect("synthetic corpus has full rank")
}

/// One rendered synthetic sequence of `n_frames` frames.
pub fn sequence(n_frames: usize) -> LandmarkSequence {
    let face = SubjectFace::new(7, 0.015);
    let (seq3d, _) = synth::generate(&face, &TaskProfile::all_aus("bench", n_frames, 0.4), 3);
    let view = ViewSpec::grid(&Default::default())[4];
    let seq = synth::render_view(&seq3d, &view, 100.0, &RenderNoise::NONE, 0);
    assert!(seq.frames.iter().all(LandmarkFrame::tracked));
    seq
}
