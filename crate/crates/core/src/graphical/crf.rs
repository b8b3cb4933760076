use serde::{Deserialize, Serialize};

use super::ChainModel;

/// Linear-chain CRF with linear node scores per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub n_states: usize,
    pub n_features: usize,
    /// One row per state: `n_features` weights followed by a bias.
    pub node_weights: Vec<Vec<f64>>,
    /// Row-major `n_states x n_states`, indexed `[from][to]`.
    pub transition: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(n_states: usize, n_features: usize) -> Self {
        Self {
            n_states,
            n_features,
            node_weights: vec![vec![0.0; n_features + 1]; n_states],
            transition: vec![0.0; n_states * n_states],
        }
    }
}

impl ChainModel for CrfParams {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn node_potentials(&self, x: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.node_weights) {
            *o = w[..self.n_features].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                + w[self.n_features];
        }
    }

    fn transition(&self) -> &[f64] {
        &self.transition
    }

    fn to_vector(&self) -> Vec<f64> {
        self.node_weights
            .iter()
            .flatten()
            .chain(&self.transition)
            .copied()
            .collect()
    }

    fn with_vector(&self, v: &[f64]) -> Self {
        let row = self.n_features + 1;
        Self {
            n_states: self.n_states,
            n_features: self.n_features,
            node_weights: v[..self.n_states * row].chunks(row).map(<[f64]>::to_vec).collect(),
            transition: v[self.n_states * row..].to_vec(),
        }
    }

    fn transition_offset(&self) -> usize {
        self.n_states * (self.n_features + 1)
    }

    fn accumulate_node_gradient(&self, x: &[f64], coef: &[f64], grad: &mut [f64]) {
        let row = self.n_features + 1;
        for (s, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let g = &mut grad[s * row..(s + 1) * row];
            g[..self.n_features].iter_mut().zip(x).for_each(|(gi, xi)| *gi += c * xi);
            g[self.n_features] += c;
        }
    }
}
