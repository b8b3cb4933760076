//! Linear-chain CRF (occurrence) and ordinal CRF (intensity): potentials,
//! exact inference, likelihood and gradient, and L-BFGS training.

pub mod chain;
pub mod corf;
pub mod crf;
pub mod lbfgs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use chain::{forward_backward, viterbi, ChainPotentials, Marginals};
pub use corf::{CorfParams, Link};
pub use crf::CrfParams;
pub use lbfgs::{LbfgsConfig, LbfgsReport};

/// A chain model whose parameters flatten to one vector: node parameters
/// first, then the row-major transition matrix.
pub trait ChainModel: Clone + Send + Sync {
    fn n_states(&self) -> usize;
    fn n_features(&self) -> usize;
    fn node_potentials(&self, x: &[f64], out: &mut [f64]);
    fn transition(&self) -> &[f64];
    fn to_vector(&self) -> Vec<f64>;
    fn with_vector(&self, v: &[f64]) -> Self;
    fn transition_offset(&self) -> usize;
    /// Adds the gradient of `sum_s coef[s] * node_s(x)` to the node part of
    /// `grad`.
    fn accumulate_node_gradient(&self, x: &[f64], coef: &[f64], grad: &mut [f64]);

    fn potentials(&self, window: &[Vec<f64>]) -> ChainPotentials {
        let s = self.n_states();
        let mut node = vec![0.0; window.len() * s];
        for (x, out) in window.iter().zip(node.chunks_mut(s)) {
            self.node_potentials(x, out);
        }
        ChainPotentials::new(s, node, self.transition().to_vec())
    }
}

/// A training window. `None` labels are unobserved and marginalized out.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Option<usize>>,
}

fn window_term<M: ChainModel>(model: &M, window: &LabeledWindow, id: usize) -> Result<(f64, Vec<f64>)> {
    let s = model.n_states();
    if let Some(&label) = window.labels.iter().flatten().find(|&&l| l >= s) {
        return Err(Error::LabelOutOfRange {
            label,
            states: s,
            window: id,
        });
    }
    let pot = model.potentials(&window.features);
    let free = forward_backward(&pot);
    let observed = if window.labels.iter().all(Option::is_some) {
        let path: Vec<usize> = window.labels.iter().map(|l| l.unwrap()).collect();
        let mut unary = vec![0.0; path.len() * s];
        let mut pairwise = vec![0.0; path.len().saturating_sub(1) * s * s];
        for (t, &st) in path.iter().enumerate() {
            unary[t * s + st] = 1.0;
            if t > 0 {
                pairwise[((t - 1) * s + path[t - 1]) * s + st] = 1.0;
            }
        }
        Marginals {
            log_z: pot.path_score(&path),
            log_z_backward: f64::NAN,
            unary,
            pairwise,
        }
    } else {
        forward_backward(&pot.clamped(&window.labels))
    };

    let value = free.log_z - observed.log_z;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective { window: id });
    }
    let mut grad = vec![0.0; model.to_vector().len()];
    let mut coef = vec![0.0; s];
    for (t, x) in window.features.iter().enumerate() {
        for st in 0..s {
            coef[st] = free.unary[t * s + st] - observed.unary[t * s + st];
        }
        model.accumulate_node_gradient(x, &coef, &mut grad);
    }
    let off = model.transition_offset();
    for t in 0..window.features.len().saturating_sub(1) {
        for k in 0..s * s {
            grad[off + k] += free.pairwise[t * s * s + k] - observed.pairwise[t * s * s + k];
        }
    }
    Ok((value, grad))
}

/// Regularized negative conditional log-likelihood over windows and its
/// gradient: `sum_w [log Z_w - log Z_w(labels)] + l2/2 |theta|^2`.
pub fn neg_log_likelihood_and_gradient<M: ChainModel>(
    model: &M,
    windows: &[LabeledWindow],
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    let terms: Vec<Result<(f64, Vec<f64>)>> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| window_term(model, w, i))
        .collect();
    let theta = model.to_vector();
    let mut value = 0.5 * l2 * theta.iter().map(|v| v * v).sum::<f64>();
    let mut grad: Vec<f64> = theta.iter().map(|v| l2 * v).collect();
    // Ordered reduction keeps results independent of thread scheduling.
    for term in terms {
        let (v, g) = term?;
        value += v;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 200,
            tol: 1e-5,
            seed: 0,
        }
    }
}

/// Minimizes the regularized NLL from `initial` with L-BFGS.
pub fn train<M: ChainModel>(initial: M, windows: &[LabeledWindow], config: &TrainConfig) -> Result<(M, LbfgsReport)> {
    if windows.is_empty() {
        return Err(Error::NoTrainingData("chain model".into()));
    }
    let lbfgs = LbfgsConfig {
        max_iter: config.max_iter,
        tol: config.tol,
        ..LbfgsConfig::default()
    };
    let report = lbfgs::minimize(
        |theta| neg_log_likelihood_and_gradient(&initial.with_vector(theta), windows, config.l2),
        initial.to_vector(),
        &lbfgs,
    )?;
    Ok((initial.with_vector(&report.x), report))
}

pub fn train_crf(windows: &[LabeledWindow], n_features: usize, config: &TrainConfig) -> Result<CrfParams> {
    Ok(train(CrfParams::zeros(2, n_features), windows, config)?.0)
}

pub fn train_corf(windows: &[LabeledWindow], n_states: usize, n_features: usize, config: &TrainConfig) -> Result<CorfParams> {
    Ok(train(CorfParams::initial(n_states, n_features), windows, config)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrediction {
    pub labels: Vec<usize>,
    /// Length-normalized log-probability of the decoded path (<= 0).
    pub score: f64,
    /// Per-frame state posteriors, row-major `T x S`.
    pub marginals: Vec<f64>,
}

impl WindowPrediction {
    pub fn posterior(&self, t: usize, state: usize) -> f64 {
        let s = self.marginals.len() / self.labels.len();
        self.marginals[t * s + state]
    }
}

/// Viterbi decoding of one window.
pub fn decode<M: ChainModel>(model: &M, window: &[Vec<f64>]) -> WindowPrediction {
    let pot = model.potentials(window);
    let (labels, path_score) = viterbi(&pot);
    let m = forward_backward(&pot);
    let score = ((path_score - m.log_z) / window.len() as f64).min(0.0);
    WindowPrediction {
        labels,
        score,
        marginals: m.unary,
    }
}
