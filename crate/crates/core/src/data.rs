//! Domain data model and file formats: landmark sequences, AU labels and
//! dataset manifests.
//!
//! Landmark files are headerless CSV with 132 columns (`x1,y1,...,x66,y66`),
//! one row per frame. Label files are CSV with a header naming
//! `occ_AU*` and `int_AU*` columns; the value 9 marks an unlabeled frame.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LANDMARKS: usize = 66;
/// Jaw contour points preceding the inner face points in the 66-point markup.
pub const N_JAW: usize = 17;
pub const N_INNER: usize = N_LANDMARKS - N_JAW;

pub type Point = [f64; 2];

pub const OCCURRENCE_AUS: [u8; 10] = [1, 4, 6, 7, 10, 12, 14, 15, 17, 23];
pub const INTENSITY_AUS: [u8; 7] = [1, 4, 6, 10, 12, 14, 17];
pub const MAX_INTENSITY: u8 = 5;
/// Label value for frames that carry no annotation.
pub const UNLABELED: u8 = 9;

/// Maps a 1-based inner-face index (1..=49) to its 0-based position in the
/// 66-point markup.
pub fn inner(index: usize) -> usize {
    debug_assert!((1..=N_INNER).contains(&index));
    N_JAW + index - 1
}

/// One frame of 66 tracked landmarks. Untracked frames hold all-zero points.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    points: Vec<Point>,
    tracked: bool,
}

impl LandmarkFrame {
    /// Builds a frame, marking it untracked (and zeroing it) when any
    /// coordinate is non-finite or every coordinate is exactly zero.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != N_LANDMARKS {
            return Err(Error::FeatureDimension {
                expected: N_LANDMARKS,
                found: points.len(),
            });
        }
        let finite = points.iter().flatten().all(|v| v.is_finite());
        let all_zero = points.iter().flatten().all(|&v| v == 0.0);
        if !finite || all_zero {
            return Ok(Self::untracked());
        }
        Ok(Self {
            points,
            tracked: true,
        })
    }

    pub fn untracked() -> Self {
        Self {
            points: vec![[0.0, 0.0]; N_LANDMARKS],
            tracked: false,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn tracked(&self) -> bool {
        self.tracked
    }
}

/// Camera view index in 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ViewId(u8);

impl ViewId {
    pub fn new(id: u8) -> Option<Self> {
        (1..=9).contains(&id).then_some(Self(id))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = ViewId> {
        (1..=9).map(ViewId)
    }
}

impl TryFrom<u8> for ViewId {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        ViewId::new(value).ok_or_else(|| format!("view id {value} outside 1..9"))
    }
}

impl From<ViewId> for u8 {
    fn from(value: ViewId) -> Self {
        value.0
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    pub frames: Vec<LandmarkFrame>,
    pub subject_id: String,
    pub task_id: String,
    /// Known only on the evaluation side; extraction and inference never read it.
    pub view_id: Option<ViewId>,
}

impl LandmarkSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn tracked_count(&self) -> usize {
        self.frames.iter().filter(|f| f.tracked()).count()
    }
}

/// Per-frame AU annotations, stored column-wise in the order of
/// [`OCCURRENCE_AUS`] and [`INTENSITY_AUS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuLabels {
    pub occurrence: Vec<Vec<u8>>,
    pub intensity: Vec<Vec<u8>>,
}

impl AuLabels {
    pub fn zeros(n_frames: usize) -> Self {
        Self {
            occurrence: vec![vec![0; n_frames]; OCCURRENCE_AUS.len()],
            intensity: vec![vec![0; n_frames]; INTENSITY_AUS.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.occurrence.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn occurrence_of(&self, au: u8) -> Option<&[u8]> {
        let idx = OCCURRENCE_AUS.iter().position(|&a| a == au)?;
        Some(&self.occurrence[idx])
    }

    pub fn intensity_of(&self, au: u8) -> Option<&[u8]> {
        let idx = INTENSITY_AUS.iter().position(|&a| a == au)?;
        Some(&self.intensity[idx])
    }

    /// Frames where an AU has intensity >= 1 but is coded absent, or the
    /// reverse. These are reported, never rejected.
    pub fn consistency_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        for (i_idx, &au) in INTENSITY_AUS.iter().enumerate() {
            let Some(occ) = self.occurrence_of(au) else {
                continue;
            };
            let int = &self.intensity[i_idx];
            let bad = occ
                .iter()
                .zip(int)
                .filter(|(&o, &c)| o != UNLABELED && c != UNLABELED && (o == 1) != (c >= 1))
                .count();
            if bad > 0 {
                warnings.push(format!(
                    "AU{au}: {bad} frames where occurrence and intensity disagree"
                ));
            }
        }
        warnings
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Development,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Development => "development",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const PITCHES: [i32; 3] = [-40, -20, 0];
pub const YAWS: [i32; 3] = [-40, 0, 40];

/// Mapping view id -> (pitch, yaw) in degrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewOrder(pub BTreeMap<ViewId, (i32, i32)>);

impl Default for ViewOrder {
    /// Views 1..9 enumerate pitch x yaw lexicographically.
    fn default() -> Self {
        let mut map = BTreeMap::new();
        let mut id = 1;
        for &p in &PITCHES {
            for &y in &YAWS {
                map.insert(ViewId(id), (p, y));
                id += 1;
            }
        }
        Self(map)
    }
}

impl ViewOrder {
    pub fn angles(&self, view: ViewId) -> Option<(i32, i32)> {
        self.0.get(&view).copied()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.0.len() != 9 {
            return Err(format!("view_order has {} entries, expected 9", self.0.len()));
        }
        let mut seen = Vec::new();
        for (view, &(p, y)) in &self.0 {
            if !PITCHES.contains(&p) || !YAWS.contains(&y) {
                return Err(format!("view {view} maps to ({p}, {y}), not on the pitch/yaw grid"));
            }
            if seen.contains(&(p, y)) {
                return Err(format!("pose ({p}, {y}) assigned to more than one view"));
            }
            seen.push((p, y));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sequence: PathBuf,
    pub labels: PathBuf,
    pub subject: String,
    pub task: String,
    pub view: ViewId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub partition: Partition,
    #[serde(default)]
    pub view_order: ViewOrder,
    pub entries: Vec<ManifestEntry>,
    /// Directory that entry paths are relative to.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn sequence_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.sequence)
    }

    pub fn labels_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.labels)
    }

    /// Loads the landmark sequence of an entry, attaching its identifiers.
    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<(LandmarkSequence, AuLabels)> {
        let mut seq = load_sequence(self.sequence_path(entry))?;
        seq.subject_id = entry.subject.clone();
        seq.task_id = entry.task.clone();
        seq.view_id = Some(entry.view);
        let labels = load_labels(self.labels_path(entry), seq.len())?;
        Ok((seq, labels))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest: view ids and view order, file existence,
/// duplicate (subject, task, view) keys, and label agreement across views.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let invalid = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    manifest.view_order.validate().map_err(invalid)?;

    let mut keys = HashMap::new();
    for entry in &manifest.entries {
        let key = (entry.subject.as_str(), entry.task.as_str(), entry.view);
        if keys.insert(key, ()).is_some() {
            return Err(invalid(format!(
                "duplicate entry for subject {}, task {}, view {}",
                entry.subject, entry.task, entry.view
            )));
        }
        for file in [manifest.sequence_path(entry), manifest.labels_path(entry)] {
            if !file.is_file() {
                return Err(invalid(format!("referenced file {} does not exist", file.display())));
            }
        }
    }

    // All views of a recording share one annotation.
    let mut by_recording: BTreeMap<(&str, &str), (PathBuf, AuLabels)> = BTreeMap::new();
    for entry in &manifest.entries {
        let labels_path = manifest.labels_path(entry);
        let labels = parse_labels(&labels_path)?;
        match by_recording.get(&(entry.subject.as_str(), entry.task.as_str())) {
            Some((first, reference)) => {
                if *reference != labels {
                    return Err(Error::ViewLabelsDisagree {
                        subject: entry.subject.clone(),
                        task: entry.task.clone(),
                        first: first.clone(),
                        other: labels_path,
                    });
                }
            }
            None => {
                by_recording.insert((&entry.subject, &entry.task), (labels_path, labels));
            }
        }
    }
    Ok(manifest)
}

/// Parses a landmark CSV. Rows with non-finite, empty or all-zero
/// coordinates become untracked frames.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<LandmarkSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 * N_LANDMARKS {
            return Err(Error::PointCount {
                path: path.to_path_buf(),
                row: row + 1,
                expected: 2 * N_LANDMARKS,
                found: fields.len(),
            });
        }
        let mut values = Vec::with_capacity(fields.len());
        for field in fields {
            let field = field.trim();
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|e| {
                    Error::parse(path, format!("row {}: {field:?}: {e}", row + 1))
                })?
            };
            values.push(v);
        }
        let points = values.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        frames.push(LandmarkFrame::new(points)?);
    }
    if frames.is_empty() {
        return Err(Error::parse(path, "sequence has no frames"));
    }
    Ok(LandmarkSequence {
        frames,
        subject_id: String::new(),
        task_id: String::new(),
        view_id: None,
    })
}

pub fn format_sequence(seq: &LandmarkSequence) -> String {
    let mut out = String::new();
    for frame in &seq.frames {
        let row: Vec<String> = frame
            .points()
            .iter()
            .flat_map(|p| [fmt_coord(p[0]), fmt_coord(p[1])])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn fmt_coord(v: f64) -> String {
    // `{}` on f64 is the shortest string that round-trips.
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_sequence(path: impl AsRef<Path>, seq: &LandmarkSequence) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_sequence(seq)).map_err(|e| Error::io(path, e))
}

pub fn label_header() -> Vec<String> {
    OCCURRENCE_AUS
        .iter()
        .map(|au| format!("occ_AU{au}"))
        .chain(INTENSITY_AUS.iter().map(|au| format!("int_AU{au}")))
        .collect()
}

/// Loads a label file and checks it against the sequence length.
pub fn load_labels(path: impl AsRef<Path>, n_frames: usize) -> Result<AuLabels> {
    let path = path.as_ref();
    let labels = parse_labels(path)?;
    if labels.len() != n_frames {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            labels: labels.len(),
            frames: n_frames,
        });
    }
    Ok(labels)
}

fn parse_labels(path: &Path) -> Result<AuLabels> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::parse(path, "missing header row"))?
        .split(',')
        .map(str::trim)
        .collect();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::parse(path, format!("missing column {name}")))
    };
    let occ_cols = OCCURRENCE_AUS
        .iter()
        .map(|au| column(&format!("occ_AU{au}")))
        .collect::<Result<Vec<_>>>()?;
    let int_cols = INTENSITY_AUS
        .iter()
        .map(|au| column(&format!("int_AU{au}")))
        .collect::<Result<Vec<_>>>()?;

    let mut labels = AuLabels {
        occurrence: vec![Vec::new(); OCCURRENCE_AUS.len()],
        intensity: vec![Vec::new(); INTENSITY_AUS.len()],
    };
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(Error::parse(
                path,
                format!("row {} has {} fields, header has {}", row + 2, fields.len(), header.len()),
            ));
        }
        let value = |col: usize, max: u8| -> Result<u8> {
            let v: u8 = fields[col].parse().map_err(|_| {
                Error::parse(path, format!("row {}: bad label {:?}", row + 2, fields[col]))
            })?;
            if v > max && v != UNLABELED {
                return Err(Error::parse(
                    path,
                    format!("row {}: label {v} in column {} out of range", row + 2, header[col]),
                ));
            }
            Ok(v)
        };
        for (k, &col) in occ_cols.iter().enumerate() {
            labels.occurrence[k].push(value(col, 1)?);
        }
        for (k, &col) in int_cols.iter().enumerate() {
            labels.intensity[k].push(value(col, MAX_INTENSITY)?);
        }
    }
    Ok(labels)
}

pub fn format_labels(labels: &AuLabels) -> String {
    let mut out = label_header().join(",");
    out.push('\n');
    for t in 0..labels.len() {
        let row: Vec<String> = labels
            .occurrence
            .iter()
            .chain(&labels.intensity)
            .map(|col| col[t].to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_labels(path: impl AsRef<Path>, labels: &AuLabels) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_labels(labels)).map_err(|e| Error::io(path, e))
}
