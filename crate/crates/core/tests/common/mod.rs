#![allow(dead_code)]

use std::path::Path;

use aupose_core::data::{Partition, Point};
use aupose_core::shape::{train_shape_model, ShapeModel, N_NONRIGID};
use aupose_core::synth::{emit_dataset, shape_corpus, EmittedDataset, PartitionSplit, SynthConfig, TaskProfile};

/// Three training subjects, one each for development and test, one short task.
pub fn tiny_config() -> SynthConfig {
    SynthConfig {
        subjects: PartitionSplit {
            train: 3,
            development: 1,
            test: 1,
        },
        tasks: vec![TaskProfile::all_aus("T1", 240, 0.3)],
        ..SynthConfig::default()
    }
}

pub fn emit(config: &SynthConfig, root: &Path) -> EmittedDataset {
    emit_dataset(config, root).expect("synthetic dataset")
}

pub fn manifest(data: &EmittedDataset, partition: Partition) -> &aupose_core::DatasetManifest {
    &data.manifests.iter().find(|(p, _)| *p == partition).expect("partition present").1
}

pub fn corpus_model(config: &SynthConfig) -> (ShapeModel, Vec<(Vec<Point>, f64, f64)>) {
    let corpus = shape_corpus(config, 20);
    let shapes: Vec<Vec<Point>> = corpus.iter().map(|c| c.0.clone()).collect();
    (train_shape_model(&shapes, N_NONRIGID).expect("shape model"), corpus)
}
