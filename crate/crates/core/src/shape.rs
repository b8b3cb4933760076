//! Point-distribution shape model.
//!
//! A shape is described by a 2D similarity (scale, rotation, translation)
//! applied to `mean + basis * nonrigid`. The basis is trained with
//! generalized Procrustes alignment and PCA on a mirror-augmented corpus, so
//! every component is either mirror-symmetric or mirror-antisymmetric, and the
//! leading component carries head yaw. Frontalization drops the similarity and
//! the pose component.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{Point, N_LANDMARKS};
use crate::error::{Error, Result};

pub const N_RIGID: usize = 4;
pub const N_NONRIGID: usize = 20;
pub const N_EXPRESSION: usize = N_NONRIGID - 1;
const DIM: usize = 2 * N_LANDMARKS;

/// Left/right landmark correspondence of the 66-point markup.
///
/// Jaw 0..=16 reverses; brows 17..=21 <-> 26..=22; the nose bridge 27..=30
/// and 33 map to themselves; nostrils 31,32 <-> 35,34; eyes 36..=41 <->
/// 45,44,43,42,47,46; outer lips 48..=54 reverse with 51 fixed, 55..=59
/// reverse with 57 fixed; inner lips 60 <-> 62, 63 <-> 65, 61 and 64 fixed.
pub const MIRROR_MAP: [usize; N_LANDMARKS] = [
    16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, // jaw
    26, 25, 24, 23, 22, 21, 20, 19, 18, 17, // brows
    27, 28, 29, 30, 35, 34, 33, 32, 31, // nose
    45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40, // eyes
    54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55, // outer lips
    62, 61, 60, 65, 64, 63, // inner lips
];

/// Reflects a shape about the vertical axis and relabels left/right points.
pub fn mirror_points(points: &[Point], map: &[usize]) -> Vec<Point> {
    map.iter()
        .map(|&src| [-points[src][0], points[src][1]])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidParams {
    pub scale: f64,
    /// Radians, counter-clockwise.
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidParams {
    pub const IDENTITY: RigidParams = RigidParams {
        scale: 1.0,
        rotation: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.tx,
            self.scale * (s * p[0] + c * p[1]) + self.ty,
        ]
    }

    pub fn invert(&self, p: Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        let (dx, dy) = (p[0] - self.tx, p[1] - self.ty);
        [
            (c * dx + s * dy) / self.scale,
            (-s * dx + c * dy) / self.scale,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub rigid: RigidParams,
    pub nonrigid: Vec<f64>,
}

impl ShapeParams {
    pub fn zeros(n_nonrigid: usize) -> Self {
        Self {
            rigid: RigidParams {
                scale: 0.0,
                rotation: 0.0,
                tx: 0.0,
                ty: 0.0,
            },
            nonrigid: vec![0.0; n_nonrigid],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.rigid.scale <= 0.0
    }

    /// The 24 parameters as one vector: rigid first.
    pub fn to_vec(&self) -> Vec<f64> {
        let r = &self.rigid;
        [r.scale, r.rotation, r.tx, r.ty]
            .into_iter()
            .chain(self.nonrigid.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub params: ShapeParams,
    /// Set for coincident or collinear inputs (e.g. untracked all-zero frames).
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub mean_shape: Vec<Point>,
    /// One row of length 132 per component, interleaved (x1, y1, x2, ...).
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub pose_component_index: usize,
    pub mirror: Vec<usize>,
}

impl ShapeModel {
    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ShapeModel =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        model.validate().map_err(|m| Error::parse(path, m))?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| Error::parse(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.mean_shape.len() != N_LANDMARKS {
            return Err(format!("mean shape has {} points", self.mean_shape.len()));
        }
        if self.basis.len() != self.eigenvalues.len() || self.basis.is_empty() {
            return Err("basis and eigenvalue counts differ".into());
        }
        if self.pose_component_index >= self.basis.len() {
            return Err("pose component index out of range".into());
        }
        if self.mirror.len() != N_LANDMARKS || self.mirror.iter().any(|&i| i >= N_LANDMARKS) {
            return Err("mirror map must be a permutation of 66 indices".into());
        }
        for (i, row) in self.basis.iter().enumerate() {
            if row.len() != DIM {
                return Err(format!("basis row {i} has length {}", row.len()));
            }
            for (j, other) in self.basis.iter().enumerate().take(i + 1) {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot(row, other) - expected).abs() > 1e-8 {
                    return Err(format!("basis rows {i} and {j} are not orthonormal"));
                }
            }
        }
        if self.eigenvalues.iter().any(|&l| !(l > 0.0))
            || self.eigenvalues.windows(2).any(|w| w[1] > w[0])
        {
            return Err("eigenvalues must be positive and non-increasing".into());
        }
        Ok(())
    }

    /// Least-squares similarity aligning the mean to `points`, then the
    /// projection of the similarity-normalized residual onto the basis.
    pub fn fit(&self, points: &[Point]) -> Fit {
        let degenerate = || Fit {
            params: ShapeParams::zeros(self.n_components()),
            degenerate: true,
        };
        if points.len() != N_LANDMARKS || points.iter().flatten().any(|v| !v.is_finite()) {
            return degenerate();
        }
        let centroid = centroid(points);
        let centered: Vec<Point> = points
            .iter()
            .map(|p| [p[0] - centroid[0], p[1] - centroid[1]])
            .collect();
        if is_degenerate(&centered) {
            return degenerate();
        }

        // The mean is centered, so the similarity fit decouples: translation is
        // the centroid and (a, b) = s(cos, sin) is a projection onto the mean
        // and its 90-degree rotation.
        let norm2: f64 = self.mean_shape.iter().map(|m| m[0] * m[0] + m[1] * m[1]).sum();
        let (mut a, mut b) = (0.0, 0.0);
        for (m, x) in self.mean_shape.iter().zip(&centered) {
            a += m[0] * x[0] + m[1] * x[1];
            b += m[0] * x[1] - m[1] * x[0];
        }
        let rigid = RigidParams {
            scale: (a / norm2).hypot(b / norm2),
            rotation: b.atan2(a),
            tx: centroid[0],
            ty: centroid[1],
        };

        let residual: Vec<f64> = points
            .iter()
            .zip(&self.mean_shape)
            .flat_map(|(&p, m)| {
                let q = rigid.invert(p);
                [q[0] - m[0], q[1] - m[1]]
            })
            .collect();
        let nonrigid = self.basis.iter().map(|row| dot(row, &residual)).collect();
        Fit {
            params: ShapeParams { rigid, nonrigid },
            degenerate: false,
        }
    }

    /// Shape in the model frame, before the similarity is applied.
    pub fn model_frame_shape(&self, nonrigid: &[f64]) -> Vec<Point> {
        let mut flat: Vec<f64> = self.mean_shape.iter().flatten().copied().collect();
        for (row, &c) in self.basis.iter().zip(nonrigid) {
            if c != 0.0 {
                for (f, &r) in flat.iter_mut().zip(row) {
                    *f += c * r;
                }
            }
        }
        flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
    }

    pub fn reconstruct(&self, params: &ShapeParams) -> Vec<Point> {
        self.model_frame_shape(&params.nonrigid)
            .into_iter()
            .map(|p| params.rigid.apply(p))
            .collect()
    }

    /// Expression coefficients (all components but the pose one) and the
    /// shape reconstructed with identity similarity and zero pose.
    /// Degenerate parameters (zero scale) map to zero expression and all-zero
    /// points.
    pub fn frontalize(&self, params: &ShapeParams) -> (Vec<f64>, Vec<Point>) {
        let n_expr = self.n_components() - 1;
        if params.is_degenerate() {
            return (vec![0.0; n_expr], vec![[0.0, 0.0]; N_LANDMARKS]);
        }
        let expr: Vec<f64> = params
            .nonrigid
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != self.pose_component_index)
            .map(|(_, &c)| c)
            .collect();
        let mut nonrigid = params.nonrigid.clone();
        nonrigid[self.pose_component_index] = 0.0;
        (expr, self.model_frame_shape(&nonrigid))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    [sx / n, sy / n]
}

/// Coincident or collinear point sets admit no unique similarity fit.
fn is_degenerate(centered: &[Point]) -> bool {
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in centered {
        sxx += p[0] * p[0];
        syy += p[1] * p[1];
        sxy += p[0] * p[1];
    }
    let trace = sxx + syy;
    if !(trace > 1e-18) {
        return true;
    }
    let det = sxx * syy - sxy * sxy;
    // Smallest eigenvalue relative to the largest.
    let disc = ((sxx - syy).powi(2) / 4.0 + sxy * sxy).sqrt();
    let lmax = trace / 2.0 + disc;
    let lmin = det / lmax;
    lmin <= 1e-12 * lmax
}

fn flatten_centered_unit(points: &[Point]) -> Vec<f64> {
    let c = centroid(points);
    let mut flat: Vec<f64> = points
        .iter()
        .flat_map(|p| [p[0] - c[0], p[1] - c[1]])
        .collect();
    let norm = dot(&flat, &flat).sqrt();
    flat.iter_mut().for_each(|v| *v /= norm);
    flat
}

/// Rotates `x` (flattened) by 90 degrees counter-clockwise.
fn rot90(x: &[f64]) -> Vec<f64> {
    x.chunks_exact(2).flat_map(|c| [-c[1], c[0]]).collect()
}

fn rotate(x: &[f64], angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    x.chunks_exact(2)
        .flat_map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
        .collect()
}

fn normalize(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

/// Generalized Procrustes alignment of centered unit-norm shapes (rotation
/// only). Returns the aligned shapes and their unit-norm mean.
fn procrustes_align(shapes: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = shapes.len() as f64;
    let mean_of = |xs: &[Vec<f64>]| {
        let mut m = vec![0.0; DIM];
        for x in xs {
            m.iter_mut().zip(x).for_each(|(a, b)| *a += b / n);
        }
        normalize(&mut m);
        m
    };
    let mut reference = mean_of(shapes);
    let mut aligned = shapes.to_vec();
    for _ in 0..100 {
        aligned = shapes
            .iter()
            .map(|x| {
                let a = dot(x, &reference);
                let b = dot(&rot90(x), &reference);
                rotate(x, b.atan2(a))
            })
            .collect();
        let mut next = mean_of(&aligned);
        // Fix the rotational gauge of the mean to the previous reference.
        let a = dot(&next, &reference);
        let b = dot(&rot90(&next), &reference);
        next = rotate(&next, b.atan2(a));
        let change: f64 = next.iter().zip(&reference).map(|(p, q)| (p - q).abs()).sum();
        reference = next;
        if change < 1e-13 {
            break;
        }
    }
    (aligned, reference)
}

fn mirror_flat(x: &[f64], map: &[usize]) -> Vec<f64> {
    map.iter().flat_map(|&src| [-x[2 * src], x[2 * src + 1]]).collect()
}

/// Trains a shape model: mirror augmentation, generalized Procrustes
/// alignment, removal of residual similarity directions, and PCA carried out
/// separately on the mirror-symmetric and antisymmetric subspaces.
pub fn train_shape_model(corpus: &[Vec<Point>], n_components: usize) -> Result<ShapeModel> {
    let mut distinct: Vec<Vec<u64>> = corpus
        .iter()
        .map(|s| s.iter().flatten().map(|v| v.to_bits()).collect())
        .collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < n_components + 1 {
        return Err(Error::CorpusTooSmall {
            found: distinct.len(),
            required: n_components + 1,
        });
    }
    if let Some(bad) = corpus.iter().find(|s| s.len() != N_LANDMARKS) {
        return Err(Error::FeatureDimension {
            expected: N_LANDMARKS,
            found: bad.len(),
        });
    }

    let map = MIRROR_MAP.to_vec();
    let mut shapes = Vec::with_capacity(2 * corpus.len());
    for s in corpus {
        let mirrored = mirror_points(s, &map);
        let (a, b) = (flatten_centered_unit(s), flatten_centered_unit(&mirrored));
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            continue;
        }
        shapes.push(a);
        shapes.push(b);
    }

    let (aligned, mut mean) = procrustes_align(&shapes);
    // Scale the model frame so the mean has unit RMS point radius.
    let unit = (N_LANDMARKS as f64).sqrt();
    mean.iter_mut().for_each(|v| *v *= unit);

    // Orthonormal similarity directions at the mean.
    let mut sim_dirs = vec![mean.clone(), rot90(&mean)];
    sim_dirs.push((0..DIM).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect());
    sim_dirs.push((0..DIM).map(|i| if i % 2 == 1 { 1.0 } else { 0.0 }).collect());
    sim_dirs.iter_mut().for_each(|d| normalize(d));

    let n = aligned.len() as f64;
    let mut cov = DMatrix::<f64>::zeros(DIM, DIM);
    for x in &aligned {
        // Tangent-plane projection, then remove any similarity component.
        let scale = unit * unit / dot(x, &mean);
        let mut d: Vec<f64> = x.iter().zip(&mean).map(|(v, m)| v * scale - m).collect();
        for dir in &sim_dirs {
            let c = dot(&d, dir);
            d.iter_mut().zip(dir).for_each(|(v, u)| *v -= c * u);
        }
        let dv = nalgebra::DVector::from_vec(d);
        cov += &dv * dv.transpose() / n;
    }

    // Symmetrized covariance split by mirror parity.
    let mut mirror_op = DMatrix::<f64>::zeros(DIM, DIM);
    for (i, &src) in map.iter().enumerate() {
        mirror_op[(2 * i, 2 * src)] = -1.0;
        mirror_op[(2 * i + 1, 2 * src + 1)] = 1.0;
    }
    let eye = DMatrix::<f64>::identity(DIM, DIM);
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::new();
    for sign in [1.0, -1.0] {
        let proj = (&eye + &mirror_op * sign) * 0.5;
        let block = &proj * &cov * &proj;
        let block = (&block + block.transpose()) * 0.5;
        let eig = SymmetricEigen::new(block);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            // Re-project to clean rounding leakage across the parity split.
            let pv = &proj * nalgebra::DVector::from_column_slice(&v);
            if pv.norm() < 0.5 {
                continue;
            }
            v = pv.iter().copied().collect();
            normalize(&mut v);
            pairs.push((lambda, v));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let lambda_max = pairs.first().map_or(0.0, |p| p.0);
    let rank = pairs
        .iter()
        .filter(|p| p.0 > 1e-10 * lambda_max.max(f64::MIN_POSITIVE))
        .count();
    if rank < n_components {
        return Err(Error::RankDeficient {
            rank,
            required: n_components,
        });
    }

    let mut basis = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (lambda, mut v) in pairs.into_iter().take(n_components) {
        // Sign convention: the largest-magnitude entry is positive.
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1 + 1e-12 { (i, x.abs()) } else { best });
        if v[imax] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(v);
        eigenvalues.push(lambda);
    }
    // Gram-Schmidt pass: parity blocks are orthogonal already; this removes
    // rounding inside near-degenerate eigenspaces.
    for i in 0..basis.len() {
        for j in 0..i {
            let c = dot(&basis[i], &basis[j]);
            let (head, tail) = basis.split_at_mut(i);
            tail[0].iter_mut().zip(&head[j]).for_each(|(v, u)| *v -= c * u);
        }
        normalize(&mut basis[i]);
    }

    Ok(ShapeModel {
        mean_shape: mean.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        basis,
        eigenvalues,
        pose_component_index: 0,
        mirror: map,
    })
}

/// Mirror parity of a basis vector: `Some(true)` symmetric, `Some(false)`
/// antisymmetric, `None` mixed beyond `tol`.
pub fn mirror_parity(v: &[f64], map: &[usize], tol: f64) -> Option<bool> {
    let m = mirror_flat(v, map);
    let sym = v.iter().zip(&m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let anti = v.iter().zip(&m).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    if sym <= tol {
        Some(true)
    } else if anti <= tol {
        Some(false)
    } else {
        None
    }
}
