use aupose_core::graphical::{
    decode, forward_backward, neg_log_likelihood_and_gradient, train_corf, train_crf, viterbi, ChainModel,
    ChainPotentials, CorfParams, CrfParams, LabeledWindow, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_potentials(rng: &mut ChaCha8Rng, n: usize, s: usize) -> ChainPotentials {
    ChainPotentials::new(
        s,
        (0..n * s).map(|_| rng.random_range(-3.0..3.0)).collect(),
        (0..s * s).map(|_| rng.random_range(-3.0..3.0)).collect(),
    )
}

fn enumerate(n: usize, s: usize) -> Vec<Vec<usize>> {
    (0..s.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let st = code % s;
                    code /= s;
                    st
                })
                .collect()
        })
        .collect()
}

#[test]
fn inference_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (n, s) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let pot = random_potentials(&mut rng, n, s);
        let paths = enumerate(n, s);
        let scores: Vec<f64> = paths.iter().map(|p| pot.path_score(p)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|v| (v - max).exp()).sum::<f64>().ln();

        let m = forward_backward(&pot);
        assert!((m.log_z - log_z).abs() < 1e-10);
        assert!((m.log_z_backward - log_z).abs() < 1e-9);
        for t in 0..n {
            for st in 0..s {
                let brute: f64 = paths
                    .iter()
                    .zip(&scores)
                    .filter(|(p, _)| p[t] == st)
                    .map(|(_, v)| (v - log_z).exp())
                    .sum();
                assert!((m.frame(t, s)[st] - brute).abs() < 1e-10);
            }
        }
        let best = (0..paths.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        let (path, score) = viterbi(&pot);
        assert_eq!(path, paths[best]);
        assert!((score - scores[best]).abs() < 1e-10);
    }
}

fn windows(rng: &mut ChaCha8Rng, s: usize, d: usize, observed: f64) -> Vec<LabeledWindow> {
    (0..3)
        .map(|_| {
            let n = rng.random_range(1..=6);
            LabeledWindow {
                features: (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
                labels: (0..n).map(|_| rng.random_bool(observed).then(|| rng.random_range(0..s))).collect(),
            }
        })
        .collect()
}

fn max_relative_gradient_error<M: ChainModel>(model: &M, data: &[LabeledWindow], l2: f64) -> f64 {
    let (_, grad) = neg_log_likelihood_and_gradient(model, data, l2).unwrap();
    let theta = model.to_vector();
    let h = 1e-5;
    (0..theta.len())
        .map(|i| {
            let at = |delta: f64| {
                let mut v = theta.clone();
                v[i] += delta;
                neg_log_likelihood_and_gradient(&model.with_vector(&v), data, l2).unwrap().0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-3)
        })
        .fold(0.0, f64::max)
}

#[test]
fn crf_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let d = rng.random_range(1..=4);
        let base = CrfParams::zeros(2, d);
        let v: Vec<f64> = base.to_vector().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = base.with_vector(&v);
        for observed in [1.0, 0.6] {
            let data = windows(&mut rng, 2, d, observed);
            assert!(max_relative_gradient_error(&model, &data, 0.3) < 1e-4);
        }
    }
}

#[test]
fn corf_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let (s, d) = (rng.random_range(3..=6), rng.random_range(1..=4));
        let base = CorfParams::initial(s, d);
        let v: Vec<f64> = base.to_vector().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = base.with_vector(&v);
        let data = windows(&mut rng, s, d, 0.8);
        assert!(max_relative_gradient_error(&model, &data, 0.3) < 1e-4);
        // The thresholds stay ordered whatever the increments are.
        assert!(model.thresholds().windows(2).all(|w| w[0] < w[1]));
    }
}

/// Windows whose single feature reveals the class: `x = label + noise`.
fn separable(rng: &mut ChaCha8Rng, s: usize, count: usize) -> Vec<LabeledWindow> {
    (0..count)
        .map(|_| {
            let mut state = rng.random_range(0..s);
            let mut labels = Vec::new();
            for _ in 0..20 {
                if rng.random_bool(0.15) {
                    state = rng.random_range(0..s);
                }
                labels.push(state);
            }
            LabeledWindow {
                features: labels.iter().map(|&l| vec![l as f64 + rng.random_range(-0.2..0.2)]).collect(),
                labels: labels.into_iter().map(Some).collect(),
            }
        })
        .collect()
}

fn accuracy<M: ChainModel>(model: &M, data: &[LabeledWindow]) -> f64 {
    let (mut hit, mut total) = (0, 0);
    for w in data {
        let pred = decode(model, &w.features);
        for (p, l) in pred.labels.iter().zip(&w.labels) {
            hit += usize::from(Some(*p) == *l);
            total += 1;
        }
    }
    hit as f64 / total as f64
}

#[test]
fn crf_learns_a_separable_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let config = TrainConfig {
        l2: 0.1,
        ..TrainConfig::default()
    };
    let model = train_crf(&separable(&mut rng, 2, 30), 1, &config).unwrap();
    assert!(accuracy(&model, &separable(&mut rng, 2, 10)) > 0.97);
}

#[test]
fn corf_learns_an_ordinal_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let config = TrainConfig {
        l2: 0.01,
        ..TrainConfig::default()
    };
    let model = train_corf(&separable(&mut rng, 6, 40), 6, 1, &config).unwrap();
    assert!(model.projection[0] > 0.0);
    assert!(accuracy(&model, &separable(&mut rng, 6, 10)) > 0.9);
}

#[test]
fn heavy_regularization_flattens_marginals() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let config = TrainConfig {
        l2: 1e8,
        ..TrainConfig::default()
    };
    let data = separable(&mut rng, 2, 10);
    let model = train_crf(&data, 1, &config).unwrap();
    let pred = decode(&model, &data[0].features);
    assert!(pred.marginals.iter().all(|p| (p - 0.5).abs() < 1e-4));
}

#[test]
fn decoding_is_deterministic_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let base = CorfParams::initial(6, 3);
    let v: Vec<f64> = base.to_vector().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = base.with_vector(&v);
    let window: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let a = decode(&model, &window);
    assert_eq!(a, decode(&model, &window));
    assert!(a.score <= 0.0);
    for row in a.marginals.chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
