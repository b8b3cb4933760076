//! Conditional ordinal random field node potentials.
//!
//! With `z = w . x`, class `c` (0-based, of `K`) has mass
//! `F(s (b_{c+1} - z)) - F(s (b_c - z))` under the logistic CDF `F`, with
//! `b_0 = -inf` and `b_K = +inf`. Thresholds are kept ordered by storing the
//! first one and the logs of the increments.

use serde::{Deserialize, Serialize};

use super::ChainModel;

/// Smallest class mass before taking the log.
pub const MASS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorfParams {
    pub n_states: usize,
    pub n_features: usize,
    pub projection: Vec<f64>,
    pub first_threshold: f64,
    /// `log(b_{k+1} - b_k)` for the remaining thresholds.
    pub log_increments: Vec<f64>,
    /// Link steepness. Held fixed during training: it is not identifiable
    /// jointly with the projection and thresholds.
    pub scale: f64,
    pub link: Link,
    /// Row-major `n_states x n_states`, indexed `[from][to]`.
    pub transition: Vec<f64>,
}

impl CorfParams {
    /// Zero projection with unit-spaced thresholds centered on zero.
    pub fn initial(n_states: usize, n_features: usize) -> Self {
        let n_thresholds = n_states - 1;
        Self {
            n_states,
            n_features,
            projection: vec![0.0; n_features],
            first_threshold: -(n_thresholds as f64 - 1.0) / 2.0,
            log_increments: vec![0.0; n_thresholds.saturating_sub(1)],
            scale: 1.0,
            link: Link::Logistic,
            transition: vec![0.0; n_states * n_states],
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.n_states - 1);
        b.push(self.first_threshold);
        for d in &self.log_increments {
            let last = *b.last().unwrap();
            b.push(last + d.exp());
        }
        b
    }

    pub fn project(&self, x: &[f64]) -> f64 {
        self.projection.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Class probabilities (before the log) at projection value `z`.
    pub fn class_masses(&self, z: f64) -> Vec<f64> {
        let b = self.thresholds();
        let cdf = |k: usize| -> f64 {
            match k {
                0 => 0.0,
                k if k == self.n_states => 1.0,
                k => sigmoid(self.scale * (b[k - 1] - z)),
            }
        };
        (0..self.n_states).map(|c| cdf(c + 1) - cdf(c)).collect()
    }

    fn bounds(&self, b: &[f64], z: f64, c: usize) -> (f64, f64) {
        let upper = if c + 1 < self.n_states {
            self.scale * (b[c] - z)
        } else {
            f64::INFINITY
        };
        let lower = if c > 0 {
            self.scale * (b[c - 1] - z)
        } else {
            f64::NEG_INFINITY
        };
        (upper, lower)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `ln(1 - exp(-d))` for `d > 0`.
fn log1m_exp_neg(d: f64) -> f64 {
    if d < std::f64::consts::LN_2 {
        (-(-d).exp_m1()).ln()
    } else {
        (-(-d).exp()).ln_1p()
    }
}

/// `ln(F(a) - F(b))` for `a > b`, and its partial derivatives in `a` and `b`.
///
/// Uses `F(a) - F(b) = F(a) F(-b) (1 - e^{-(a-b)})`.
pub fn log_interval_mass(a: f64, b: f64) -> (f64, f64, f64) {
    let floor = MASS_FLOOR.ln();
    let (value, da, db) = match (a.is_infinite(), b.is_infinite()) {
        (true, true) => (0.0, 0.0, 0.0),
        (false, true) => (log_sigmoid(a), sigmoid(-a), 0.0),
        (true, false) => (log_sigmoid(-b), 0.0, -sigmoid(b)),
        (false, false) => {
            let d = a - b;
            if !(d > 0.0) {
                return (floor, 0.0, 0.0);
            }
            let r = 1.0 / d.exp_m1();
            (
                log_sigmoid(a) + log_sigmoid(-b) + log1m_exp_neg(d),
                sigmoid(-a) + r,
                -sigmoid(b) - r,
            )
        }
    };
    if value < floor {
        (floor, 0.0, 0.0)
    } else {
        (value, da, db)
    }
}

impl ChainModel for CorfParams {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn node_potentials(&self, x: &[f64], out: &mut [f64]) {
        let z = self.project(x);
        let b = self.thresholds();
        for (c, o) in out.iter_mut().enumerate() {
            let (upper, lower) = self.bounds(&b, z, c);
            *o = log_interval_mass(upper, lower).0;
        }
    }

    fn transition(&self) -> &[f64] {
        &self.transition
    }

    fn to_vector(&self) -> Vec<f64> {
        self.projection
            .iter()
            .copied()
            .chain(std::iter::once(self.first_threshold))
            .chain(self.log_increments.iter().copied())
            .chain(self.transition.iter().copied())
            .collect()
    }

    fn with_vector(&self, v: &[f64]) -> Self {
        let d = self.n_features;
        let k = self.log_increments.len();
        Self {
            projection: v[..d].to_vec(),
            first_threshold: v[d],
            log_increments: v[d + 1..d + 1 + k].to_vec(),
            transition: v[d + 1 + k..].to_vec(),
            ..self.clone()
        }
    }

    fn transition_offset(&self) -> usize {
        self.n_features + 1 + self.log_increments.len()
    }

    fn accumulate_node_gradient(&self, x: &[f64], coef: &[f64], grad: &mut [f64]) {
        let z = self.project(x);
        let b = self.thresholds();
        let mut dz = 0.0;
        // Gradient with respect to each threshold b_k.
        let mut db = vec![0.0; b.len()];
        for (c, &w) in coef.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (upper, lower) = self.bounds(&b, z, c);
            let (_, g_upper, g_lower) = log_interval_mass(upper, lower);
            dz -= w * self.scale * (g_upper + g_lower);
            if c + 1 < self.n_states {
                db[c] += w * self.scale * g_upper;
            }
            if c > 0 {
                db[c - 1] += w * self.scale * g_lower;
            }
        }
        let d = self.n_features;
        grad[..d].iter_mut().zip(x).for_each(|(g, xi)| *g += dz * xi);
        // b_k = b_0 + sum_{j<k} exp(delta_j)
        grad[d] += db.iter().sum::<f64>();
        for (j, delta) in self.log_increments.iter().enumerate() {
            let tail: f64 = db[j + 1..].iter().sum();
            grad[d + 1 + j] += delta.exp() * tail;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mass_matches_direct_difference() {
        for &(a, b) in &[(1.0, -1.0), (0.3, 0.2), (5.0, 4.0), (-3.0, -8.0), (20.0, -20.0)] {
            let (v, _, _) = log_interval_mass(a, b);
            assert!((v.exp() - (sigmoid(a) - sigmoid(b))).abs() < 1e-14);
        }
        assert!((log_interval_mass(0.0, f64::NEG_INFINITY).0 - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_interval_mass(f64::INFINITY, 0.0).0 - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn interval_mass_derivatives() {
        let h = 1e-6;
        for &(a, b) in &[(1.0, -1.0), (0.3, 0.2), (-2.0, -2.5)] {
            let (_, da, db) = log_interval_mass(a, b);
            let fa = (log_interval_mass(a + h, b).0 - log_interval_mass(a - h, b).0) / (2.0 * h);
            let fb = (log_interval_mass(a, b + h).0 - log_interval_mass(a, b - h).0) / (2.0 * h);
            assert!((da - fa).abs() < 1e-6 && (db - fb).abs() < 1e-6);
        }
    }

    #[test]
    fn midpoint_projection_selects_the_enclosed_class() {
        let mut p = CorfParams::initial(6, 1);
        p.projection = vec![1.0];
        let b = p.thresholds();
        let x = [(b[1] + b[2]) / 2.0];
        let mut out = [0.0; 6];
        p.node_potentials(&x, &mut out);
        let argmax = (0..6).max_by(|&i, &j| out[i].total_cmp(&out[j])).unwrap();
        assert_eq!(argmax, 2);
    }

    #[test]
    fn thresholds_increase() {
        let mut p = CorfParams::initial(6, 2);
        p.log_increments = vec![-5.0, 2.0, -1.0, 0.3];
        let b = p.thresholds();
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }
}
