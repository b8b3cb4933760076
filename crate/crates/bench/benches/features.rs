use aupose_core::features::{self, FeatureConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_features(c: &mut Criterion) {
    let model = aupose_bench::shape_model();
    let seq = aupose_bench::sequence(300);
    let config = FeatureConfig::default();
    c.bench_function("fit one frame", |b| b.iter(|| model.fit(seq.frames[0].points())));
    c.bench_function("extract 300 frames", |b| b.iter(|| features::extract(&seq, &model, &config)));
}

criterion_group!(benches, bench_features);
criterion_main!(benches);
