//! Multiview synthetic landmark data.
//!
//! A hand-built 66-point 3D face is perturbed per subject, animated by AU
//! activations with onset/apex/offset envelopes, rotated through the 3x3
//! pitch/yaw grid (pitch about x first, then yaw about y), projected
//! orthographically, centered, and scaled so the dataset-average interocular
//! distance is 100.
//!
//! The AU displacement table is a test fixture, not an anatomical model:
//!
//! | AU | landmarks moved |
//! |----|-----------------|
//! | 1  | inner brows up |
//! | 4  | brows down and toward the midline |
//! | 6  | lower lids and upper cheeks up |
//! | 7  | upper lids down, lower lids up |
//! | 10 | upper lip up |
//! | 12 | lip corners out and up |
//! | 14 | lip corners out and back |
//! | 15 | lip corners down |
//! | 17 | lower lip and chin up |
//! | 23 | lips narrower and thinner |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, AuLabels, DatasetManifest, LandmarkFrame, LandmarkSequence, ManifestEntry, Partition, Point,
    ViewId, ViewOrder, INTENSITY_AUS, MAX_INTENSITY, N_LANDMARKS, OCCURRENCE_AUS,
};
use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

pub const INTEROCULAR: f64 = 100.0;

const RIGHT_EYE: [usize; 6] = [36, 37, 38, 39, 40, 41];
const LEFT_EYE: [usize; 6] = [42, 43, 44, 45, 46, 47];

fn depth(x: f64) -> f64 {
    0.3 * (1.0 - x * x / 0.9)
}

/// Neutral 66-point face, eye centers at x = -0.5 and 0.5.
pub fn template() -> Vec<Point3> {
    let mut p: Vec<Point3> = Vec::with_capacity(N_LANDMARKS);
    for i in 0..17 {
        let t = std::f64::consts::PI * i as f64 / 16.0;
        let (x, y) = (-0.95 * t.cos(), 0.2 - 1.5 * t.sin());
        p.push([x, y, -0.7 + 0.6 * t.sin()]);
    }
    let brow = [(-0.85, 0.5), (-0.7, 0.58), (-0.55, 0.61), (-0.4, 0.6), (-0.22, 0.56)];
    for &(x, y) in &brow {
        p.push([x, y, depth(x) + 0.05]);
    }
    for &(x, y) in brow.iter().rev() {
        p.push([-x, y, depth(x) + 0.05]);
    }
    for (y, z) in [(0.32, 0.35), (0.12, 0.45), (-0.08, 0.55), (-0.28, 0.65)] {
        p.push([0.0, y, z]);
    }
    for x in [-0.25f64, -0.12, 0.0, 0.12, 0.25] {
        let y = if x == 0.0 { -0.42 } else { -0.4 + 0.08 * x.abs() };
        p.push([x, y, 0.45 - 0.4 * x.abs()]);
    }
    let eye = [(-0.7, 0.3), (-0.58, 0.37), (-0.42, 0.37), (-0.3, 0.3), (-0.42, 0.24), (-0.58, 0.24)];
    for &(x, y) in &eye {
        p.push([x, y, depth(x)]);
    }
    // Left eye order: inner corner, upper lid inner to outer, outer corner,
    // lower lid outer to inner.
    for &i in &[3usize, 2, 1, 0, 5, 4] {
        let (x, y) = eye[i];
        p.push([-x, y, depth(x)]);
    }
    let outer_lip = [
        (-0.4, -0.8),
        (-0.27, -0.7),
        (-0.1, -0.66),
        (0.0, -0.68),
        (0.1, -0.66),
        (0.27, -0.7),
        (0.4, -0.8),
        (0.27, -0.92),
        (0.1, -0.97),
        (0.0, -0.98),
        (-0.1, -0.97),
        (-0.27, -0.92),
    ];
    for &(x, y) in &outer_lip {
        p.push([x, y, depth(x) + 0.1]);
    }
    for &(x, y) in &[(-0.12, -0.78), (0.0, -0.78), (0.12, -0.78), (0.12, -0.84), (0.0, -0.85), (-0.12, -0.84)] {
        p.push([x, y, depth(x) + 0.08]);
    }
    debug_assert_eq!(p.len(), N_LANDMARKS);
    p
}

/// Displacement of each landmark at full intensity for one AU.
pub fn au_displacement(au: u8) -> Vec<(usize, Point3)> {
    let up = |i: usize, d: f64| (i, [0.0, d, 0.0]);
    match au {
        1 => vec![up(19, 0.06), up(20, 0.11), up(21, 0.14), up(22, 0.14), up(23, 0.11), up(24, 0.06)],
        4 => {
            let mut v = Vec::new();
            for (k, i) in (17..=21).enumerate() {
                let inward = 0.03 + 0.02 * k as f64;
                let down = -0.03 - 0.01 * k as f64;
                v.push((i, [inward, down, 0.0]));
                v.push((43 - i, [-inward, down, 0.0]));
            }
            v
        }
        6 => vec![
            up(40, 0.03),
            up(41, 0.035),
            up(46, 0.035),
            up(47, 0.03),
            up(36, 0.025),
            up(45, 0.025),
            up(1, 0.08),
            up(2, 0.08),
            up(3, 0.05),
            up(13, 0.05),
            up(14, 0.08),
            up(15, 0.08),
        ],
        7 => vec![
            up(37, -0.05),
            up(38, -0.05),
            up(43, -0.05),
            up(44, -0.05),
            up(40, 0.015),
            up(41, 0.015),
            up(46, 0.015),
            up(47, 0.015),
        ],
        10 => vec![
            up(49, 0.07),
            up(50, 0.09),
            up(51, 0.09),
            up(52, 0.09),
            up(53, 0.07),
            up(60, 0.06),
            up(61, 0.07),
            up(62, 0.06),
        ],
        12 => vec![
            (48, [-0.05, 0.12, -0.02]),
            (54, [0.05, 0.12, -0.02]),
            (49, [-0.02, 0.05, 0.0]),
            (53, [0.02, 0.05, 0.0]),
            (59, [-0.02, 0.06, 0.0]),
            (55, [0.02, 0.06, 0.0]),
            (60, [-0.01, 0.04, 0.0]),
            (62, [0.01, 0.04, 0.0]),
        ],
        14 => vec![
            (48, [-0.12, 0.0, -0.06]),
            (54, [0.12, 0.0, -0.06]),
            (49, [-0.05, 0.0, -0.02]),
            (53, [0.05, 0.0, -0.02]),
            (59, [-0.05, 0.0, -0.02]),
            (55, [0.05, 0.0, -0.02]),
            (60, [-0.03, 0.0, 0.0]),
            (62, [0.03, 0.0, 0.0]),
            (63, [0.03, 0.0, 0.0]),
            (65, [-0.03, 0.0, 0.0]),
        ],
        15 => vec![
            up(48, -0.12),
            up(54, -0.12),
            (59, [-0.02, -0.08, 0.0]),
            (55, [0.02, -0.08, 0.0]),
            up(58, -0.05),
            up(56, -0.05),
            up(57, -0.03),
            up(65, -0.03),
            up(63, -0.03),
            up(49, -0.03),
            up(53, -0.03),
        ],
        17 => vec![
            up(55, 0.04),
            up(56, 0.05),
            up(57, 0.055),
            up(58, 0.05),
            up(59, 0.04),
            up(63, 0.03),
            up(64, 0.035),
            up(65, 0.03),
            up(6, 0.06),
            up(7, 0.09),
            up(8, 0.1),
            up(9, 0.09),
            up(10, 0.06),
        ],
        23 => vec![
            (48, [0.04, 0.0, 0.0]),
            (54, [-0.04, 0.0, 0.0]),
            up(49, -0.04),
            up(50, -0.05),
            up(51, -0.05),
            up(52, -0.05),
            up(53, -0.04),
            up(59, 0.04),
            up(58, 0.05),
            up(57, 0.05),
            up(56, 0.05),
            up(55, 0.04),
        ],
        _ => Vec::new(),
    }
}

/// SplitMix64 step; derives independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn eye_center(points: &[Point3], eye: &[usize]) -> Point3 {
    let mut c = [0.0; 3];
    for &i in eye {
        (0..3).for_each(|k| c[k] += points[i][k] / eye.len() as f64);
    }
    c
}

/// Distance between the eye centers.
pub fn interocular_3d(points: &[Point3]) -> f64 {
    let (a, b) = (eye_center(points, &RIGHT_EYE), eye_center(points, &LEFT_EYE));
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

pub fn interocular_2d(points: &[Point]) -> f64 {
    let c = |eye: &[usize]| {
        let n = eye.len() as f64;
        eye.iter()
            .fold([0.0, 0.0], |acc, &i| [acc[0] + points[i][0] / n, acc[1] + points[i][1] / n])
    };
    let (a, b) = (c(&RIGHT_EYE), c(&LEFT_EYE));
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// A subject's neutral face: the template with a left/right-symmetric
/// random perturbation and random width and height.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFace {
    pub seed: u64,
    pub neutral: Vec<Point3>,
    /// Per-AU displacement gain, indexed like `OCCURRENCE_AUS`.
    pub gains: Vec<f64>,
}

impl SubjectFace {
    pub fn new(seed: u64, variation: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = template();
        let normal = Normal::new(0.0, variation.max(0.0)).expect("finite sigma");
        let width = 1.0 + rng.random_range(-1.0..1.0) * 2.0 * variation;
        let height = 1.0 + rng.random_range(-1.0..1.0) * 2.0 * variation;
        let mut neutral = base.clone();
        let map = crate::shape::MIRROR_MAP;
        for i in 0..N_LANDMARKS {
            let j = map[i];
            if j < i {
                continue;
            }
            let d = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
            neutral[i] = [
                (base[i][0] + d[0]) * width,
                (base[i][1] + d[1]) * height,
                base[i][2] + d[2],
            ];
            if j != i {
                neutral[j] = [-neutral[i][0], neutral[i][1], neutral[i][2]];
            } else {
                neutral[i][0] = 0.0;
            }
        }
        let gains = OCCURRENCE_AUS.iter().map(|_| rng.random_range(0.9..1.1)).collect();
        Self { seed, neutral, gains }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskProfile {
    pub name: String,
    pub n_frames: usize,
    /// Target fraction of frames in which each AU is active; AUs absent from
    /// the map never activate.
    pub au_activity: BTreeMap<u8, f64>,
    /// Standard deviation of per-landmark 3D jitter, in template units
    /// (interocular distance about 1).
    pub noise: f64,
    /// Amplitude in degrees of slow head-motion wobble around the view pose.
    pub head_motion: f64,
    /// Multiplier on the AU displacement table.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Displacement grows as `(activation / 5)^response`; below 1 makes
    /// trace-level activity more visible.
    #[serde(default = "default_response")]
    pub response: f64,
}

fn default_amplitude() -> f64 {
    3.0
}

fn default_response() -> f64 {
    0.5
}

impl TaskProfile {
    pub fn all_aus(name: &str, n_frames: usize, activity: f64) -> Self {
        Self {
            name: name.into(),
            n_frames,
            au_activity: OCCURRENCE_AUS.iter().map(|&au| (au, activity)).collect(),
            noise: 0.003,
            head_motion: 5.0,
            amplitude: default_amplitude(),
            response: default_response(),
        }
    }
}

/// One animated 3D sequence with its latent AU activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Face3DSequence {
    pub points: Vec<Vec<Point3>>,
    /// Continuous activation in `[0, 5]` per occurrence AU, per frame.
    pub activations: Vec<Vec<f64>>,
    /// Per-frame (pitch, yaw) offsets in degrees added at render time.
    pub head_motion: Vec<(f64, f64)>,
    pub subject_seed: u64,
}

impl Face3DSequence {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Onset/apex/offset events for one AU over `n` frames.
fn envelope(rng: &mut ChaCha8Rng, n: usize, activity: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    if activity <= 0.0 {
        return e;
    }
    let activity = activity.min(0.95);
    let mean_event = 14.0 + 60.0 + 14.0;
    let mean_gap = mean_event * (1.0 - activity) / activity;
    let mut t = (rng.random_range(0.0..1.0) * mean_gap) as usize;
    while t < n {
        let onset = rng.random_range(8..=20usize);
        let apex = rng.random_range(35..=85usize);
        let offset = rng.random_range(8..=20usize);
        let peak = rng.random_range(1..=MAX_INTENSITY) as f64;
        for k in 0..onset + apex + offset {
            let v = if k < onset {
                peak * (k + 1) as f64 / (onset + 1) as f64
            } else if k < onset + apex {
                peak
            } else {
                peak * (onset + apex + offset - k) as f64 / (offset + 1) as f64
            };
            if t + k < n {
                e[t + k] = e[t + k].max(v);
            }
        }
        t += onset + apex + offset + (mean_gap * rng.random_range(0.5..1.5)).round() as usize;
    }
    e
}

/// Intensity label of a continuous activation.
pub fn quantize(activation: f64) -> u8 {
    activation.round().clamp(0.0, MAX_INTENSITY as f64) as u8
}

/// Animates a subject under a task profile. Deterministic in `seed`.
pub fn generate(subject: &SubjectFace, profile: &TaskProfile, seed: u64) -> (Face3DSequence, AuLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = profile.n_frames;
    let activations: Vec<Vec<f64>> = OCCURRENCE_AUS
        .iter()
        .map(|au| envelope(&mut rng, n, profile.au_activity.get(au).copied().unwrap_or(0.0)))
        .collect();

    let jitter = Normal::new(0.0, profile.noise.max(0.0)).expect("finite sigma");
    let phase: [f64; 2] = [rng.random_range(0.0..6.3), rng.random_range(0.0..6.3)];
    let period: [f64; 2] = [rng.random_range(90.0..200.0), rng.random_range(90.0..200.0)];
    let displacements: Vec<Vec<(usize, Point3)>> = OCCURRENCE_AUS.iter().map(|&au| au_displacement(au)).collect();

    let mut points = Vec::with_capacity(n);
    let mut head_motion = Vec::with_capacity(n);
    for t in 0..n {
        let mut frame = subject.neutral.clone();
        for (a, disp) in displacements.iter().enumerate() {
            let level = activations[a][t] / MAX_INTENSITY as f64;
            let w = level.powf(profile.response) * subject.gains[a] * profile.amplitude;
            if w == 0.0 {
                continue;
            }
            for &(i, d) in disp {
                (0..3).for_each(|k| frame[i][k] += w * d[k]);
            }
        }
        if profile.noise > 0.0 {
            for p in frame.iter_mut() {
                (0..3).for_each(|k| p[k] += jitter.sample(&mut rng));
            }
        }
        points.push(frame);
        let wobble = |k: usize| profile.head_motion * (std::f64::consts::TAU * t as f64 / period[k] + phase[k]).sin();
        head_motion.push((wobble(0), wobble(1)));
    }

    let mut labels = AuLabels::zeros(n);
    for (a, &au) in OCCURRENCE_AUS.iter().enumerate() {
        let intensity: Vec<u8> = activations[a].iter().map(|&v| quantize(v)).collect();
        labels.occurrence[a] = intensity.iter().map(|&v| u8::from(v >= 1)).collect();
        if let Some(k) = INTENSITY_AUS.iter().position(|&x| x == au) {
            labels.intensity[k] = intensity;
        }
    }
    (
        Face3DSequence {
            points,
            activations,
            head_motion,
            subject_seed: subject.seed,
        },
        labels,
    )
}

/// Rotation by `pitch` about x followed by `yaw` about y (degrees).
pub fn rotate(p: Point3, pitch_deg: f64, yaw_deg: f64) -> Point3 {
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (x, y, z) = (p[0], cp * p[1] - sp * p[2], sp * p[1] + cp * p[2]);
    [cy * x + sy * z, y, -sy * x + cy * z]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view: ViewId,
    pub pitch: f64,
    pub yaw: f64,
}

impl ViewSpec {
    pub fn grid(order: &ViewOrder) -> Vec<ViewSpec> {
        order
            .0
            .iter()
            .map(|(&view, &(p, y))| ViewSpec {
                view,
                pitch: p as f64,
                yaw: y as f64,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderNoise {
    /// Standard deviation of 2D landmark noise, in output units.
    pub tracking_noise: f64,
    /// Per-frame tracking-failure probability is
    /// `occlusion_rate * (|pitch| + |yaw|) / 80`.
    pub occlusion_rate: f64,
}

impl RenderNoise {
    pub const NONE: RenderNoise = RenderNoise {
        tracking_noise: 0.0,
        occlusion_rate: 0.0,
    };

    pub fn failure_probability(&self, view: &ViewSpec) -> f64 {
        (self.occlusion_rate * (view.pitch.abs() + view.yaw.abs()) / 80.0).clamp(0.0, 1.0)
    }
}

/// Projects a 3D sequence into one view. `scale` maps template units to
/// output units; the view id is not recorded in the returned sequence.
pub fn render_view(seq: &Face3DSequence, view: &ViewSpec, scale: f64, noise: &RenderNoise, seed: u64) -> LandmarkSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tracking = Normal::new(0.0, noise.tracking_noise.max(0.0)).expect("finite sigma");
    let p_fail = noise.failure_probability(view);
    let frames = seq
        .points
        .iter()
        .zip(&seq.head_motion)
        .map(|(points, &(dp, dy))| {
            let fail = p_fail > 0.0 && rng.random_bool(p_fail);
            let projected: Vec<Point> = points
                .iter()
                .map(|&p| {
                    let r = rotate(p, view.pitch + dp, view.yaw + dy);
                    [r[0], r[1]]
                })
                .collect();
            let n = projected.len() as f64;
            let c = projected.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
            let mut out: Vec<Point> = projected
                .iter()
                .map(|p| [(p[0] - c[0]) * scale, (p[1] - c[1]) * scale])
                .collect();
            if noise.tracking_noise > 0.0 {
                for p in out.iter_mut() {
                    p[0] += tracking.sample(&mut rng);
                    p[1] += tracking.sample(&mut rng);
                }
            }
            if fail {
                LandmarkFrame::untracked()
            } else {
                LandmarkFrame::new(out).expect("66 finite points")
            }
        })
        .collect();
    LandmarkSequence {
        frames,
        subject_id: String::new(),
        task_id: String::new(),
        view_id: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSplit {
    pub train: usize,
    pub development: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub subjects: PartitionSplit,
    pub tasks: Vec<TaskProfile>,
    /// Standard deviation of the per-subject shape perturbation.
    pub subject_variation: f64,
    pub noise: RenderNoise,
    pub view_order: ViewOrder,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2017,
            subjects: PartitionSplit {
                train: 6,
                development: 2,
                test: 2,
            },
            tasks: vec![
                TaskProfile::all_aus("T1", 300, 0.3),
                TaskProfile::all_aus("T2", 300, 0.3),
            ],
            subject_variation: 0.005,
            noise: RenderNoise {
                tracking_noise: 0.3,
                occlusion_rate: 0.05,
            },
            view_order: ViewOrder::default(),
        }
    }
}

impl SynthConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let s = self.subjects;
        if s.train + s.development + s.test == 0 {
            v.push("no subjects requested".into());
        }
        if self.tasks.is_empty() {
            v.push("no tasks configured".into());
        }
        for t in &self.tasks {
            if t.n_frames == 0 {
                v.push(format!("task {} has zero frames", t.name));
            }
            if !(t.noise >= 0.0) || !t.head_motion.is_finite() {
                v.push(format!("task {}: noise must be >= 0 and head_motion finite", t.name));
            }
            if !(t.amplitude >= 0.0) || !(t.response > 0.0) {
                v.push(format!("task {}: amplitude must be >= 0 and response > 0", t.name));
            }
            for (au, a) in &t.au_activity {
                if !OCCURRENCE_AUS.contains(au) {
                    v.push(format!("task {}: AU{au} is not modeled", t.name));
                }
                if !(0.0..=1.0).contains(a) {
                    v.push(format!("task {}: AU{au} activity {a} outside [0, 1]", t.name));
                }
            }
        }
        if !(self.subject_variation >= 0.0) {
            v.push("subject_variation must be >= 0".into());
        }
        if !(self.noise.tracking_noise >= 0.0) {
            v.push("tracking_noise must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise.occlusion_rate) {
            v.push("occlusion_rate must be in [0, 1]".into());
        }
        if let Err(e) = self.view_order.validate() {
            v.push(e);
        }
        v
    }

    /// Subject ids with their partition; subjects never share a partition.
    pub fn subjects(&self) -> Vec<(String, Partition)> {
        let s = self.subjects;
        let parts = [
            (Partition::Train, s.train),
            (Partition::Development, s.development),
            (Partition::Test, s.test),
        ];
        let mut out = Vec::new();
        for (partition, count) in parts {
            for _ in 0..count {
                out.push((format!("S{:02}", out.len() + 1), partition));
            }
        }
        out
    }
}

/// Output-units-per-template-unit factor that puts the dataset-average
/// neutral interocular distance at [`INTEROCULAR`].
pub fn dataset_scale(faces: &[SubjectFace]) -> f64 {
    let mean = faces.iter().map(|f| interocular_3d(&f.neutral)).sum::<f64>() / faces.len() as f64;
    INTEROCULAR / mean
}

/// Ground truth of an emitted dataset, for tests and audits.
#[derive(Debug, Clone)]
pub struct EmittedDataset {
    pub manifests: Vec<(Partition, DatasetManifest)>,
    pub scale: f64,
}

/// Writes landmark and label CSVs for every (subject, task, view) and one
/// manifest per partition (`train.json`, `development.json`, `test.json`)
/// under `root`.
pub fn emit_dataset(config: &SynthConfig, root: impl AsRef<Path>) -> Result<EmittedDataset> {
    let root = root.as_ref();
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(Error::Manifest {
            path: root.to_path_buf(),
            message: violations.join("; "),
        });
    }
    let subjects = config.subjects();
    let faces: Vec<SubjectFace> = (0..subjects.len())
        .map(|i| SubjectFace::new(mix_seed(config.seed, i as u64 + 1), config.subject_variation))
        .collect();
    let scale = dataset_scale(&faces);
    let views = ViewSpec::grid(&config.view_order);

    let jobs: Vec<(usize, usize)> = (0..subjects.len())
        .flat_map(|s| (0..config.tasks.len()).map(move |t| (s, t)))
        .collect();
    let entries: Vec<(Partition, Vec<ManifestEntry>)> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let (subject, partition) = &subjects[s];
            let task = &config.tasks[t];
            let task_seed = mix_seed(faces[s].seed, 1000 + t as u64);
            let (seq3d, labels) = generate(&faces[s], task, task_seed);
            let dir = root.join(partition.name());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut out = Vec::new();
            for view in &views {
                let v = view.view.get();
                let seq = render_view(&seq3d, view, scale, &config.noise, mix_seed(task_seed, v as u64));
                let stem = format!("{subject}_{}_v{v}", task.name);
                let seq_rel = Path::new(partition.name()).join(format!("{stem}.csv"));
                let lab_rel = Path::new(partition.name()).join(format!("{stem}.labels.csv"));
                data::write_sequence(root.join(&seq_rel), &seq)?;
                data::write_labels(root.join(&lab_rel), &labels)?;
                out.push(ManifestEntry {
                    sequence: seq_rel,
                    labels: lab_rel,
                    subject: subject.clone(),
                    task: task.name.clone(),
                    view: view.view,
                });
            }
            Ok((*partition, out))
        })
        .collect::<Result<_>>()?;

    let mut manifests = Vec::new();
    for partition in [Partition::Train, Partition::Development, Partition::Test] {
        let manifest = DatasetManifest {
            partition,
            view_order: config.view_order.clone(),
            entries: entries
                .iter()
                .filter(|(p, _)| *p == partition)
                .flat_map(|(_, e)| e.iter().cloned())
                .collect(),
            root: root.to_path_buf(),
        };
        if manifest.entries.is_empty() {
            continue;
        }
        manifest.write(root.join(format!("{}.json", partition.name())))?;
        manifests.push((partition, manifest));
    }
    Ok(EmittedDataset { manifests, scale })
}

/// Neutral and posed 2D shapes across all views, for training a shape model
/// without going through files. Each subject contributes `frames_per_view`
/// frames of one animated sequence per view.
pub fn shape_corpus(config: &SynthConfig, frames_per_view: usize) -> Vec<(Vec<Point>, f64, f64)> {
    let subjects = config.subjects();
    let faces: Vec<SubjectFace> = (0..subjects.len())
        .map(|i| SubjectFace::new(mix_seed(config.seed, i as u64 + 1), config.subject_variation))
        .collect();
    let scale = dataset_scale(&faces);
    let profile = TaskProfile {
        n_frames: frames_per_view,
        ..config.tasks.first().cloned().unwrap_or_else(|| TaskProfile::all_aus("T1", frames_per_view, 0.4))
    };
    let mut out = Vec::new();
    for face in &faces {
        let (seq3d, _) = generate(face, &profile, mix_seed(face.seed, 77));
        for view in ViewSpec::grid(&config.view_order) {
            let seq = render_view(&seq3d, &view, scale, &RenderNoise::NONE, 0);
            for (frame, &(dp, dy)) in seq.frames.iter().zip(&seq3d.head_motion) {
                out.push((frame.points().to_vec(), view.pitch + dp, view.yaw + dy));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mirror_symmetric(p: &[Point3]) -> bool {
        let map = crate::shape::MIRROR_MAP;
        (0..N_LANDMARKS).all(|i| {
            let j = map[i];
            (p[i][0] + p[j][0]).abs() < 1e-12 && (p[i][1] - p[j][1]).abs() < 1e-12 && (p[i][2] - p[j][2]).abs() < 1e-12
        })
    }

    #[test]
    fn template_is_symmetric_with_unit_interocular() {
        let t = template();
        assert!(mirror_symmetric(&t));
        assert!((interocular_3d(&t) - 1.0).abs() < 1e-12);
        assert!(mirror_symmetric(&SubjectFace::new(3, 0.02).neutral));
    }

    #[test]
    fn zero_activity_gives_a_static_face() {
        let face = SubjectFace::new(1, 0.01);
        let profile = TaskProfile {
            name: "still".into(),
            n_frames: 50,
            au_activity: BTreeMap::new(),
            noise: 0.0,
            head_motion: 0.0,
            amplitude: 1.0,
            response: 1.0,
        };
        let (seq, labels) = generate(&face, &profile, 9);
        assert!(seq.points.iter().all(|f| *f == face.neutral));
        assert!(labels.occurrence.iter().chain(&labels.intensity).flatten().all(|&v| v == 0));
    }

    #[test]
    fn au12_moves_only_the_mouth() {
        let face = SubjectFace::new(1, 0.01);
        let profile = TaskProfile {
            name: "smile".into(),
            n_frames: 200,
            au_activity: [(12u8, 0.6)].into_iter().collect(),
            noise: 0.0,
            head_motion: 0.0,
            amplitude: 1.0,
            response: 1.0,
        };
        let (seq, labels) = generate(&face, &profile, 4);
        assert!(labels.occurrence_of(12).unwrap().contains(&1));
        for i in 0..N_LANDMARKS {
            let moved = seq.points.iter().any(|f| (0..3).any(|k| (f[i][k] - face.neutral[i][k]).abs() > 1e-12));
            assert_eq!(moved, (48..N_LANDMARKS).contains(&i) && au_displacement(12).iter().any(|d| d.0 == i), "point {i}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_labels_are_consistent() {
        let face = SubjectFace::new(5, 0.02);
        let profile = TaskProfile::all_aus("T", 300, 0.4);
        let (a, la) = generate(&face, &profile, 11);
        let (b, lb) = generate(&face, &profile, 11);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.consistency_warnings().is_empty());
        assert!(la.intensity.iter().flatten().all(|&v| v <= MAX_INTENSITY));
    }

    #[test]
    fn rotation_preserves_distances() {
        let t = template();
        let r: Vec<Point3> = t.iter().map(|&p| rotate(p, -40.0, 40.0)).collect();
        for i in 0..N_LANDMARKS {
            for j in 0..N_LANDMARKS {
                let d = |p: &[Point3]| (0..3).map(|k| (p[i][k] - p[j][k]).powi(2)).sum::<f64>().sqrt();
                assert!((d(&t) - d(&r)).abs() < 1e-9);
            }
        }
    }

    fn still(face: &SubjectFace) -> Face3DSequence {
        Face3DSequence {
            points: vec![face.neutral.clone()],
            activations: vec![vec![0.0]; OCCURRENCE_AUS.len()],
            head_motion: vec![(0.0, 0.0)],
            subject_seed: face.seed,
        }
    }

    #[test]
    fn frontal_view_has_the_target_interocular_distance() {
        let face = SubjectFace::new(1, 0.0);
        let scale = dataset_scale(std::slice::from_ref(&face));
        let view = ViewSpec {
            view: ViewId::new(8).unwrap(),
            pitch: 0.0,
            yaw: 0.0,
        };
        let seq = render_view(&still(&face), &view, scale, &RenderNoise::NONE, 0);
        assert!((interocular_2d(seq.frames[0].points()) - INTEROCULAR).abs() < 1e-9);
    }

    #[test]
    fn yaw_compresses_width_of_near_planar_points() {
        // Eye and brow points are nearly coplanar.
        let face = SubjectFace::new(1, 0.0);
        let idx: Vec<usize> = (17..27).chain(36..48).collect();
        let width = |yaw: f64| {
            let seq = render_view(
                &still(&face),
                &ViewSpec {
                    view: ViewId::new(1).unwrap(),
                    pitch: 0.0,
                    yaw,
                },
                1.0,
                &RenderNoise::NONE,
                0,
            );
            let xs: Vec<f64> = idx.iter().map(|&i| seq.frames[0].points()[i][0]).collect();
            xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min)
        };
        let ratio = width(40.0) / width(0.0);
        assert!((ratio - 40f64.to_radians().cos()).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn occlusion_rate_matches_configuration() {
        let face = SubjectFace::new(2, 0.01);
        let (seq3d, _) = generate(&face, &TaskProfile::all_aus("T", 4000, 0.3), 1);
        let noise = RenderNoise {
            tracking_noise: 0.0,
            occlusion_rate: 0.2,
        };
        let extreme = ViewSpec {
            view: ViewId::new(1).unwrap(),
            pitch: -40.0,
            yaw: -40.0,
        };
        let seq = render_view(&seq3d, &extreme, 100.0, &noise, 3);
        let failed = (seq.len() - seq.tracked_count()) as f64 / seq.len() as f64;
        assert!((failed - 0.2).abs() < 0.03, "{failed}");
        let frontal = ViewSpec { pitch: 0.0, yaw: 0.0, ..extreme };
        assert_eq!(render_view(&seq3d, &frontal, 100.0, &noise, 3).tracked_count(), seq.len());
    }

    #[test]
    fn subjects_are_disjoint_across_partitions() {
        let config = SynthConfig {
            subjects: PartitionSplit {
                train: 1,
                development: 0,
                test: 1,
            },
            ..SynthConfig::default()
        };
        let s = config.subjects();
        assert_eq!(s, vec![("S01".into(), Partition::Train), ("S02".into(), Partition::Test)]);
    }
}
