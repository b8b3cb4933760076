//! Per-frame geometric descriptor and correlation-based feature selection.
//!
//! Layout of the 158 features:
//!
//! | block            | size | content                                             |
//! |------------------|------|-----------------------------------------------------|
//! | expression       | 19   | non-rigid shape parameters without the pose one     |
//! | delta expression | 19   | change from the previous frame                      |
//! | group geometry   | 71   | squared consecutive distances and triplet angles    |
//! | median distance  | 49   | distance of each inner point to the stable median   |
//!
//! Group and median features are computed on the frontalized shape.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inner, LandmarkSequence, Point, N_INNER};
use crate::error::{Error, Result};
use crate::shape::{ShapeModel, N_EXPRESSION};

pub const EXPR_LEN: usize = N_EXPRESSION;
pub const DELTA_LEN: usize = N_EXPRESSION;
pub const GROUP_LEN: usize = 71;
pub const MEDIAN_LEN: usize = N_INNER;
pub const N_FEATURES: usize = EXPR_LEN + DELTA_LEN + GROUP_LEN + MEDIAN_LEN;

/// Inner-point groups (1-based inner indices): brow then eye on each side,
/// and the mouth.
pub const GROUPS: [&[usize]; 3] = [
    &[1, 2, 3, 4, 5, 20, 21, 22, 23, 24, 25],
    &[6, 7, 8, 9, 10, 26, 27, 28, 29, 30, 31],
    &[
        32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49,
    ],
];

/// Inner nose points, excluded from every group and nearly rigid under
/// expression.
pub const DEFAULT_STABLE_POINTS: [usize; 9] = [11, 12, 13, 14, 15, 16, 17, 18, 19];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

pub const BLOCKS: [Block; 4] = [
    Block { name: "expression", start: 0, len: EXPR_LEN },
    Block { name: "delta_expression", start: EXPR_LEN, len: DELTA_LEN },
    Block { name: "group_distances_and_angles", start: EXPR_LEN + DELTA_LEN, len: GROUP_LEN },
    Block { name: "median_distances", start: EXPR_LEN + DELTA_LEN + GROUP_LEN, len: MEDIAN_LEN },
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn from_blocks(expr: &[f64], delta: &[f64], group: &[f64], median: &[f64]) -> Self {
        assert_eq!(
            (expr.len(), delta.len(), group.len(), median.len()),
            (EXPR_LEN, DELTA_LEN, GROUP_LEN, MEDIAN_LEN)
        );
        Self([expr, delta, group, median].concat())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn block(&self, index: usize) -> &[f64] {
        let b = BLOCKS[index];
        &self.0[b.start..b.start + b.len]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// 1-based inner indices whose median anchors the distance block.
    pub stable_points: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            stable_points: DEFAULT_STABLE_POINTS.to_vec(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.stable_points.is_empty() {
            return Err("stable point set is empty".into());
        }
        if let Some(p) = self.stable_points.iter().find(|p| !(1..=N_INNER).contains(p)) {
            return Err(format!("stable point {p} is not an inner point (1..=49)"));
        }
        Ok(())
    }
}

pub fn expr_features(expr: &[f64]) -> Vec<f64> {
    expr.to_vec()
}

/// Difference to the previous frame; the first frame of a session repeats
/// its own expression parameters.
pub fn delta_features(expr: &[f64], previous: Option<&[f64]>) -> Vec<f64> {
    match previous {
        Some(prev) => expr.iter().zip(prev).map(|(a, b)| a - b).collect(),
        None => expr.to_vec(),
    }
}

fn sq_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Angle at `vertex` between the segments to `a` and `b`, by the law of
/// cosines. Zero when either segment has zero length.
pub fn triplet_angle(a: Point, vertex: Point, b: Point) -> f64 {
    let (d_va, d_vb, d_ab) = (sq_dist(vertex, a), sq_dist(vertex, b), sq_dist(a, b));
    if d_va == 0.0 || d_vb == 0.0 {
        return 0.0;
    }
    let cos = (d_va + d_vb - d_ab) / (2.0 * d_va.sqrt() * d_vb.sqrt());
    cos.clamp(-1.0, 1.0).acos()
}

/// Squared distances between consecutive points, then the angle at the
/// middle point of each consecutive triplet, for each group in turn.
pub fn group_features(points: &[Point]) -> Vec<f64> {
    let mut out = Vec::with_capacity(GROUP_LEN);
    for group in GROUPS {
        let pts: Vec<Point> = group.iter().map(|&i| points[inner(i)]).collect();
        out.extend(pts.windows(2).map(|w| sq_dist(w[0], w[1])));
        out.extend(pts.windows(3).map(|w| triplet_angle(w[0], w[1], w[2])));
    }
    out
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Euclidean distance of every inner point to the coordinate-wise median of
/// the stable points.
pub fn median_distance_features(points: &[Point], stable: &[usize]) -> Vec<f64> {
    let mut xs: Vec<f64> = stable.iter().map(|&i| points[inner(i)][0]).collect();
    let mut ys: Vec<f64> = stable.iter().map(|&i| points[inner(i)][1]).collect();
    let m = [median(&mut xs), median(&mut ys)];
    (1..=N_INNER).map(|i| sq_dist(points[inner(i)], m).sqrt()).collect()
}

/// Features for every frame of a sequence. Never reads the view id.
pub fn extract(seq: &LandmarkSequence, model: &ShapeModel, config: &FeatureConfig) -> Vec<FeatureVector> {
    let frontal: Vec<(Vec<f64>, Vec<Point>)> = seq
        .frames
        .par_iter()
        .map(|frame| model.frontalize(&model.fit(frame.points()).params))
        .collect();
    let mut out = Vec::with_capacity(frontal.len());
    for (t, (expr, pts)) in frontal.iter().enumerate() {
        let prev = t.checked_sub(1).map(|p| frontal[p].0.as_slice());
        out.push(FeatureVector::from_blocks(
            &expr_features(expr),
            &delta_features(expr, prev),
            &group_features(pts),
            &median_distance_features(pts, &config.stable_points),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub selected_indices: Vec<usize>,
    pub merit: f64,
}

fn pearson_columns(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    // Standardized columns; constant columns become all-zero so their
    // correlations are 0.
    columns
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let ss: f64 = c.iter().map(|v| (v - mean).powi(2)).sum();
            if ss <= 1e-300 || !ss.is_finite() {
                return vec![0.0; c.len()];
            }
            let inv = 1.0 / ss.sqrt();
            c.iter().map(|v| (v - mean) * inv).collect()
        })
        .collect()
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Hall's merit of a subset from its summed feature-class correlation and
/// summed pairwise feature-feature correlation.
fn merit(k: usize, sum_cf: f64, sum_ff: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    sum_cf / (k as f64 + 2.0 * sum_ff).sqrt()
}

/// Merit of an explicit subset; used by tests and reports.
pub fn subset_merit(r_cf: &[f64], r_ff: &[Vec<f64>], subset: &[usize]) -> f64 {
    let sum_cf: f64 = subset.iter().map(|&i| r_cf[i]).sum();
    let mut sum_ff = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            sum_ff += r_ff[i][j];
        }
    }
    merit(subset.len(), sum_cf, sum_ff)
}

/// Absolute feature-class and feature-feature Pearson correlations.
pub fn correlations(rows: &[Vec<f64>], labels: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = rows.first().map_or(0, Vec::len);
    let columns: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let z = pearson_columns(&columns);
    let zl = pearson_columns(std::slice::from_ref(&labels.to_vec())).remove(0);
    let r_cf = z.iter().map(|c| corr(c, &zl).abs()).collect();
    let r_ff = (0..d)
        .into_par_iter()
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { corr(&z[i], &z[j]).abs() }).collect())
        .collect();
    (r_cf, r_ff)
}

#[derive(Debug)]
struct Candidate {
    merit: f64,
    order: usize,
    subset: Vec<usize>,
    sum_cf: f64,
    sum_ff: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Higher merit first; among equals, the earlier-generated subset.
        self.merit
            .total_cmp(&other.merit)
            .then_with(|| other.order.cmp(&self.order))
    }
}

const MERIT_EPS: f64 = 1e-12;

/// Correlation-based feature selection with best-first forward search.
/// The search stops after `patience` consecutive expansions that fail to
/// improve the best merit; ties resolve toward lower feature indices.
pub fn cfs_select(rows: &[Vec<f64>], labels: &[f64], patience: usize) -> Result<FeatureSelection> {
    let distinct = labels.iter().any(|&l| l != labels[0]);
    if labels.is_empty() || !distinct {
        return Err(Error::ConstantLabels);
    }
    let (r_cf, r_ff) = correlations(rows, labels);
    Ok(best_first(&r_cf, &r_ff, patience))
}

pub fn best_first(r_cf: &[f64], r_ff: &[Vec<f64>], patience: usize) -> FeatureSelection {
    let d = r_cf.len();
    let mut open = BinaryHeap::new();
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    let mut order = 0;
    open.push(Candidate {
        merit: 0.0,
        order,
        subset: Vec::new(),
        sum_cf: 0.0,
        sum_ff: 0.0,
    });
    let mut best = (Vec::new(), 0.0);
    let mut stale = 0;
    while let Some(node) = open.pop() {
        let mut improved = false;
        for f in 0..d {
            if node.subset.binary_search(&f).is_ok() {
                continue;
            }
            let mut subset = node.subset.clone();
            let pos = subset.partition_point(|&g| g < f);
            subset.insert(pos, f);
            if !visited.insert(subset.clone()) {
                continue;
            }
            let sum_cf = node.sum_cf + r_cf[f];
            let sum_ff = node.sum_ff + node.subset.iter().map(|&g| r_ff[f][g]).sum::<f64>();
            let m = merit(subset.len(), sum_cf, sum_ff);
            if m > best.1 + MERIT_EPS {
                best = (subset.clone(), m);
                improved = true;
            }
            order += 1;
            open.push(Candidate {
                merit: m,
                order,
                subset,
                sum_cf,
                sum_ff,
            });
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                break;
            }
        }
    }
    FeatureSelection {
        selected_indices: best.0,
        merit: best.1,
    }
}

/// Zero-mean, unit-variance scaling from training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for r in rows {
            var.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
        }
        let std = var
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Picks the selected columns of a full feature row.
pub fn project(row: &[f64], selection: &[usize]) -> Vec<f64> {
    selection.iter().map(|&i| row[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSidecar {
    pub n_features: usize,
    pub blocks: Vec<Block>,
    pub stable_points: Vec<usize>,
    /// Per-AU selection and standardization, when a trained bundle exists.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selections: Vec<SidecarSelection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarSelection {
    pub model: String,
    pub selected_indices: Vec<usize>,
    pub standardization: Standardizer,
}

impl FeatureSidecar {
    pub fn new(config: &FeatureConfig) -> Self {
        Self {
            n_features: N_FEATURES,
            blocks: BLOCKS.to_vec(),
            stable_points: config.stable_points.clone(),
            selections: Vec::new(),
        }
    }
}

pub fn format_matrix(rows: &[FeatureVector]) -> String {
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.values().iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: impl AsRef<Path>, rows: &[FeatureVector]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_matrix(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Vec<FeatureVector>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(row, line)| {
            let values = line
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", row + 1)))?;
            if values.len() != N_FEATURES {
                return Err(Error::FeatureDimension {
                    expected: N_FEATURES,
                    found: values.len(),
                });
            }
            Ok(FeatureVector(values))
        })
        .collect()
}
