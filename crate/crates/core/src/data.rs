//! Recordings, windows and the synthetic generator.
//!
//! A recording is a row-per-frame numeric text file. Column layout (1-based):
//! 1-22 joint X, 23-44 joint Y, 45-66 joint Z, 67-70 sEMG, 71-72 opaque
//! extras, 73 binary protective-behaviour label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modality::{JointSegmentMap, Segment};
use crate::{seed, N_COORDS, N_FEATURES, N_JOINTS};

/// Minimum number of columns in a recording row.
pub const MIN_COLUMNS: usize = 73;
const LABEL_COLUMN: usize = 72;
const LABEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row} has {found} columns, expected at least {MIN_COLUMNS}")]
    RowTooShort { row: usize, found: usize },
    #[error("row {row}, column {column}: cannot parse {token:?} as a number")]
    NonNumericField {
        row: usize,
        column: usize,
        token: String,
    },
    #[error("row {row}, column {column}: non-finite value")]
    NonFiniteField { row: usize, column: usize },
    #[error("row {row}: label {value} is not 0 or 1")]
    InvalidLabel { row: usize, value: f64 },
    #[error("file contains no frames")]
    EmptyFile,
    #[error("subject {0:?} is assigned to both train and valid")]
    SubjectInBothSplits(String),
    #[error("subjects without a split assignment: {}", .0.join(", "))]
    UnassignedSubject(Vec<String>),
    #[error("assigned subject {0:?} has no recording")]
    UnknownSubject(String),
    #[error("window length {length} exceeds sequence length {frames}")]
    WindowLongerThanSequence { length: usize, frames: usize },
    #[error("invalid window parameters: {0}")]
    InvalidWindowParams(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DataError>,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    ChronicPain,
    Healthy,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::ChronicPain => "chronic_pain",
            Group::Healthy => "healthy",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chronic_pain" => Ok(Group::ChronicPain),
            "healthy" => Ok(Group::Healthy),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

/// One frame: 70 features, two opaque extra columns and the binary label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub features: [f64; N_FEATURES],
    /// Columns 71-72, kept only so recordings round-trip.
    pub extras: [f64; 2],
    pub label: u8,
}

impl FrameRecord {
    pub fn coords_x(&self) -> &[f64] {
        &self.features[0..N_JOINTS]
    }

    pub fn coords_y(&self) -> &[f64] {
        &self.features[N_JOINTS..2 * N_JOINTS]
    }

    pub fn coords_z(&self) -> &[f64] {
        &self.features[2 * N_JOINTS..N_COORDS]
    }

    pub fn semg(&self) -> &[f64] {
        &self.features[N_COORDS..N_FEATURES]
    }
}

/// One subject-session recording. Cloning is cheap; frames are shared.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub subject_id: String,
    pub group: Group,
    frames: Arc<[FrameRecord]>,
}

impl SequenceData {
    pub fn new(
        subject_id: impl Into<String>,
        group: Group,
        frames: Vec<FrameRecord>,
    ) -> Result<Self, DataError> {
        if frames.is_empty() {
            return Err(DataError::EmptyFile);
        }
        Ok(SequenceData {
            subject_id: subject_id.into(),
            group,
            frames: frames.into(),
        })
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn positive_rate(&self) -> f64 {
        let pos = self.frames.iter().filter(|f| f.label == 1).count();
        pos as f64 / self.frames.len() as f64
    }

    /// Serializes back to row-per-frame text with 73 comma-separated columns.
    pub fn to_rows(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * 73 * 12);
        for frame in self.frames.iter() {
            for v in frame.features.iter().chain(frame.extras.iter()) {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(if frame.label == 1 { "1" } else { "0" });
            out.push('\n');
        }
        out
    }
}

/// Read access to a `frames x features` block of values.
pub trait FrameSource: Sync {
    fn n_frames(&self) -> usize;
    fn n_features(&self) -> usize;
    fn value(&self, frame: usize, feature: usize) -> f64;
}

/// Owned row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data does not match shape");
        FeatureMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        FeatureMatrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        FeatureMatrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

impl FrameSource for FeatureMatrix {
    fn n_frames(&self) -> usize {
        self.rows
    }

    fn n_features(&self) -> usize {
        self.cols
    }

    fn value(&self, frame: usize, feature: usize) -> f64 {
        self.get(frame, feature)
    }
}

/// Fixed-length slab of consecutive frames with a single derived label.
#[derive(Debug, Clone)]
pub struct Window {
    pub subject_id: String,
    pub label: u8,
    frames: Arc<[FrameRecord]>,
    start: usize,
    length: usize,
}

impl Window {
    /// Builds a standalone window from explicit feature rows.
    pub fn from_rows(subject_id: impl Into<String>, rows: &[[f64; N_FEATURES]], label: u8) -> Self {
        let frames: Vec<FrameRecord> = rows
            .iter()
            .map(|r| FrameRecord {
                features: *r,
                extras: [0.0; 2],
                label,
            })
            .collect();
        let length = frames.len();
        Window {
            subject_id: subject_id.into(),
            label,
            frames: frames.into(),
            start: 0,
            length,
        }
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    /// Frame offset of this window within its source sequence.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn frame(&self, t: usize) -> &FrameRecord {
        &self.frames[self.start + t]
    }

    pub fn features(&self) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.length * N_FEATURES);
        for t in 0..self.length {
            data.extend_from_slice(&self.frame(t).features);
        }
        FeatureMatrix::new(self.length, N_FEATURES, data)
    }

    /// A copy of this window carrying a different label.
    pub fn with_label(&self, label: u8) -> Window {
        Window {
            label,
            ..self.clone()
        }
    }
}

impl FrameSource for Window {
    fn n_frames(&self) -> usize {
        self.length
    }

    fn n_features(&self) -> usize {
        N_FEATURES
    }

    fn value(&self, frame: usize, feature: usize) -> f64 {
        self.frame(frame).features[feature]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    pub length: usize,
    pub stride: usize,
    pub positive_fraction_threshold: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            length: 180,
            stride: 45,
            positive_fraction_threshold: 0.5,
        }
    }
}

impl WindowParams {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.length == 0 {
            return Err(DataError::InvalidWindowParams(
                "length must be positive".into(),
            ));
        }
        if self.stride == 0 {
            return Err(DataError::InvalidWindowParams(
                "stride must be positive".into(),
            ));
        }
        let th = self.positive_fraction_threshold;
        if !(th > 0.0 && th <= 1.0) {
            return Err(DataError::InvalidWindowParams(format!(
                "positive_fraction_threshold {th} outside (0, 1]"
            )));
        }
        Ok(())
    }

    /// Number of windows a sequence of `n_frames` yields.
    pub fn count(&self, n_frames: usize) -> usize {
        if n_frames < self.length {
            0
        } else {
            (n_frames - self.length) / self.stride + 1
        }
    }
}

fn parse_field(token: &str, row: usize, column: usize) -> Result<f64, DataError> {
    let v: f64 = token.parse().map_err(|_| DataError::NonNumericField {
        row,
        column,
        token: token.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DataError::NonFiniteField { row, column });
    }
    Ok(v)
}

/// Parses one recording. The delimiter (comma or whitespace) is detected
/// from the first non-blank row; blank lines are skipped.
pub fn parse_emopain_file(
    bytes: &[u8],
    subject_id: &str,
    group: Group,
) -> Result<SequenceData, DataError> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();
    let comma = match lines.peek() {
        Some((_, first)) => first.contains(','),
        None => return Err(DataError::EmptyFile),
    };

    let mut frames = Vec::new();
    let mut tokens: Vec<&str> = Vec::with_capacity(80);
    for (idx, line) in lines {
        let row = idx + 1;
        tokens.clear();
        if comma {
            tokens.extend(line.split(',').map(str::trim));
        } else {
            tokens.extend(line.split_whitespace());
        }
        if tokens.len() < MIN_COLUMNS {
            return Err(DataError::RowTooShort {
                row,
                found: tokens.len(),
            });
        }
        let mut features = [0.0; N_FEATURES];
        for (j, slot) in features.iter_mut().enumerate() {
            *slot = parse_field(tokens[j], row, j + 1)?;
        }
        let extras = [
            parse_field(tokens[N_FEATURES], row, N_FEATURES + 1)?,
            parse_field(tokens[N_FEATURES + 1], row, N_FEATURES + 2)?,
        ];
        let raw = parse_field(tokens[LABEL_COLUMN], row, LABEL_COLUMN + 1)?;
        let label = if raw.abs() <= LABEL_TOLERANCE {
            0
        } else if (raw - 1.0).abs() <= LABEL_TOLERANCE {
            1
        } else {
            return Err(DataError::InvalidLabel { row, value: raw });
        };
        frames.push(FrameRecord {
            features,
            extras,
            label,
        });
    }
    SequenceData::new(subject_id, group, frames)
}

/// Explicit subject-to-split assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub valid: Vec<String>,
}

pub fn split_train_valid(
    sequences: &[SequenceData],
    assignment: &SplitAssignment,
) -> Result<(Vec<SequenceData>, Vec<SequenceData>), DataError> {
    let train: BTreeSet<&str> = assignment.train.iter().map(String::as_str).collect();
    let valid: BTreeSet<&str> = assignment.valid.iter().map(String::as_str).collect();
    if let Some(id) = train.intersection(&valid).next() {
        return Err(DataError::SubjectInBothSplits(id.to_string()));
    }

    let present: BTreeSet<&str> = sequences.iter().map(|s| s.subject_id.as_str()).collect();
    let unassigned: Vec<String> = present
        .iter()
        .filter(|id| !train.contains(*id) && !valid.contains(*id))
        .map(|id| id.to_string())
        .collect();
    if !unassigned.is_empty() {
        return Err(DataError::UnassignedSubject(unassigned));
    }
    if let Some(id) = train.union(&valid).find(|id| !present.contains(*id)) {
        return Err(DataError::UnknownSubject(id.to_string()));
    }

    let (tr, va): (Vec<_>, Vec<_>) = sequences
        .iter()
        .cloned()
        .partition(|s| train.contains(s.subject_id.as_str()));
    Ok((tr, va))
}

/// Cuts a sequence into windows at offsets `0, stride, 2*stride, ...`.
/// The trailing partial window is dropped.
pub fn make_windows(seq: &SequenceData, params: &WindowParams) -> Result<Vec<Window>, DataError> {
    params.validate()?;
    let n = seq.len();
    if params.length > n {
        return Err(DataError::WindowLongerThanSequence {
            length: params.length,
            frames: n,
        });
    }
    let count = params.count(n);
    let mut windows = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * params.stride;
        let positives = seq.frames[start..start + params.length]
            .iter()
            .filter(|f| f.label == 1)
            .count();
        let fraction = positives as f64 / params.length as f64;
        windows.push(Window {
            subject_id: seq.subject_id.clone(),
            label: u8::from(fraction >= params.positive_fraction_threshold),
            frames: Arc::clone(&seq.frames),
            start,
            length: params.length,
        });
    }
    Ok(windows)
}

/// Windows every sequence in order and concatenates the results.
pub fn windows_for(
    sequences: &[SequenceData],
    params: &WindowParams,
) -> Result<Vec<Window>, DataError> {
    let mut out = Vec::new();
    for seq in sequences {
        out.extend(make_windows(seq, params)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Manifest

/// One manifest record: `subject_id,group,split,path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub subject_id: String,
    pub group: Group,
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative record paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, DataError> {
        let bytes = std::fs::read(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest = Manifest::parse(&bytes).map_err(|message| DataError::Manifest {
            path: path.to_path_buf(),
            message,
        })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn parse(bytes: &[u8]) -> Result<Manifest, String> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(bytes);
        let mut records = Vec::new();
        for rec in reader.deserialize() {
            let rec: ManifestRecord = rec.map_err(|e| e.to_string())?;
            records.push(rec);
        }
        if records.is_empty() {
            return Err("no records".into());
        }
        Ok(Manifest {
            records,
            base_dir: PathBuf::new(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,group,split,path\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.subject_id,
                r.group,
                r.split.as_str(),
                r.path.display()
            ));
        }
        out
    }

    pub fn assignment(&self) -> SplitAssignment {
        let mut a = SplitAssignment::default();
        for r in &self.records {
            match r.split {
                Split::Train => a.train.push(r.subject_id.clone()),
                Split::Valid => a.valid.push(r.subject_id.clone()),
            }
        }
        a
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    /// Parses every listed file (in parallel) in manifest order.
    pub fn load_sequences(&self) -> Result<Vec<SequenceData>, DataError> {
        self.records
            .par_iter()
            .map(|r| {
                let path = self.resolve(r);
                let bytes = std::fs::read(&path).map_err(|source| DataError::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_emopain_file(&bytes, &r.subject_id, r.group).map_err(|e| DataError::InFile {
                    path,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Loads all files and splits them per the manifest's split column.
    pub fn load_split(&self) -> Result<(Vec<SequenceData>, Vec<SequenceData>), DataError> {
        let seqs = self.load_sequences()?;
        split_train_valid(&seqs, &self.assignment())
    }
}

// ---------------------------------------------------------------------------
// Synthetic generator

/// Controls for the synthetic recording generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub frames_per_subject: usize,
    /// Target fraction of label-1 frames.
    pub positive_rate: f64,
    /// Planted signal amplitude per modality name. Recognised names:
    /// `all`, `coords`, `semg`, `upper_limbs`, `lower_limbs`, `trunk`.
    pub modality_snr: BTreeMap<String, f64>,
    pub seed: u64,
    /// Mean length of a protective bout in frames. Bouts are at least half this long.
    pub mean_bout_frames: usize,
    /// When set, each protective bout expresses exactly one signal-bearing
    /// modality (chosen uniformly) instead of all of them.
    pub complementary: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_subjects: 23,
            frames_per_subject: 6000,
            positive_rate: 0.0596,
            modality_snr: BTreeMap::from([("coords".to_string(), 0.5), ("semg".to_string(), 0.5)]),
            seed: 0,
            mean_bout_frames: 240,
            complementary: false,
        }
    }
}

/// AR(1) coefficient of the per-feature noise.
const NOISE_AR: f64 = 0.8;
/// Share of noise variance common to all features of one joint (or all sEMG channels).
const NOISE_SHARED: f64 = 0.3;
/// Oscillation period of the planted pattern, in frames.
const PATTERN_PERIOD: f64 = 48.0;

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.n_subjects == 0 {
            return bad("n_subjects must be positive".into());
        }
        if self.frames_per_subject == 0 {
            return bad("frames_per_subject must be positive".into());
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!(
                "positive_rate {} outside (0, 1)",
                self.positive_rate
            ));
        }
        if self.modality_snr.is_empty() {
            return bad("modality_snr needs at least one entry".into());
        }
        if self.mean_bout_frames < 2 {
            return bad("mean_bout_frames must be at least 2".into());
        }
        for (name, snr) in &self.modality_snr {
            if !(snr.is_finite() && *snr >= 0.0) {
                return bad(format!("snr for {name:?} must be finite and >= 0"));
            }
            if signal_features(name).is_none() {
                return bad(format!("unknown modality {name:?} in modality_snr"));
            }
        }
        Ok(())
    }

    /// Subject id of the `i`-th generated subject.
    pub fn subject_id(&self, i: usize) -> String {
        format!("S{:02}", i + 1)
    }

    /// Group and split following the 10+6 / 4+3 proportions of the reference cohort.
    pub fn subject_role(&self, i: usize) -> (Group, Split) {
        let n = self.n_subjects;
        let n_train = if n == 1 {
            1
        } else {
            ((n as f64 * 16.0 / 23.0).round() as usize).clamp(1, n - 1)
        };
        let (pos, len, cp_share, split) = if i < n_train {
            (i, n_train, 10.0 / 16.0, Split::Train)
        } else {
            (i - n_train, n - n_train, 4.0 / 7.0, Split::Valid)
        };
        let n_cp = (len as f64 * cp_share).round() as usize;
        let group = if pos < n_cp {
            Group::ChronicPain
        } else {
            Group::Healthy
        };
        (group, split)
    }
}

fn signal_features(name: &str) -> Option<Vec<usize>> {
    let joint_map = JointSegmentMap::default();
    let segment = |s: Segment| -> Vec<usize> {
        let mut v: Vec<usize> = joint_map
            .joints_in(s)
            .flat_map(|j| [j, N_JOINTS + j, 2 * N_JOINTS + j])
            .collect();
        v.sort_unstable();
        v
    };
    match name {
        "all" => Some((0..N_FEATURES).collect()),
        "coords" => Some((0..N_COORDS).collect()),
        "semg" => Some((N_COORDS..N_FEATURES).collect()),
        "upper_limbs" => Some(segment(Segment::UpperLimbs)),
        "lower_limbs" => Some(segment(Segment::LowerLimbs)),
        "trunk" => Some(segment(Segment::Trunk)),
        _ => None,
    }
}

/// Per-feature constants shared by every subject of a generated dataset.
struct FeatureProfile {
    offset: [f64; N_FEATURES],
    scale: [f64; N_FEATURES],
    sign: [f64; N_FEATURES],
    phase: [f64; N_FEATURES],
}

impl FeatureProfile {
    fn new(seed: u64) -> Self {
        let mut rng = seed::rng_for(seed, "feature-profile");
        let mut p = FeatureProfile {
            offset: [0.0; N_FEATURES],
            scale: [0.0; N_FEATURES],
            sign: [0.0; N_FEATURES],
            phase: [0.0; N_FEATURES],
        };
        for j in 0..N_FEATURES {
            if j < N_COORDS {
                p.offset[j] = rng.random_range(-800.0..800.0);
                p.scale[j] = rng.random_range(20.0..80.0);
            } else {
                p.offset[j] = rng.random_range(0.05..0.2);
                p.scale[j] = rng.random_range(0.01..0.04);
            }
            p.sign[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            p.phase[j] = rng.random_range(0.0..std::f64::consts::TAU);
        }
        p
    }

    /// Unit-RMS pattern: a constant shift plus an oscillation, in standardized units.
    fn pattern(&self, j: usize, u: usize) -> f64 {
        let osc = (std::f64::consts::TAU * u as f64 / PATTERN_PERIOD + self.phase[j]).sin();
        (self.sign[j] + osc) / 1.5f64.sqrt()
    }
}

fn noise_group(j: usize) -> usize {
    if j < N_COORDS {
        j % N_JOINTS
    } else {
        N_JOINTS
    }
}

/// Geometric number of extra frames with the given mean (support 0, 1, ...).
fn geometric<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = 1.0 / (1.0 + mean);
    Geometric::new(p)
        .map(|g| g.sample(rng) as usize)
        .unwrap_or(0)
}

/// Label track plus the carrier modality (index into the signal list) of each frame.
fn label_track<R: Rng>(
    config: &SyntheticConfig,
    carriers: usize,
    rng: &mut R,
) -> (Vec<u8>, Vec<Option<(usize, usize)>>) {
    let n = config.frames_per_subject;
    let r = config.positive_rate;
    let mean_bout = config.mean_bout_frames as f64;
    let min_bout = (mean_bout / 2.0).floor();
    let mean_gap = mean_bout * (1.0 - r) / r;
    let min_gap = (mean_gap / 2.0).floor();

    let mut labels = Vec::with_capacity(n);
    // (carrier, frame offset within bout) for label-1 frames
    let mut bout = Vec::with_capacity(n);
    let mut positive = rng.random_bool(r);
    let mut first = true;
    while labels.len() < n {
        let (min, mean) = if positive {
            (min_bout, mean_bout)
        } else {
            (min_gap, mean_gap)
        };
        let mut len = min as usize + geometric(rng, mean - min);
        if first {
            // Enter the first segment at a uniform point.
            len = rng.random_range(1..=len.max(1));
            first = false;
        }
        let len = len.max(1);
        let carrier = if positive && config.complementary && carriers > 0 {
            Some(rng.random_range(0..carriers))
        } else {
            None
        };
        for u in 0..len {
            if labels.len() == n {
                break;
            }
            labels.push(u8::from(positive));
            bout.push(if positive {
                Some((carrier.unwrap_or(usize::MAX), u))
            } else {
                None
            });
        }
        positive = !positive;
    }
    (labels, bout)
}

/// Generates the `index`-th subject of a synthetic dataset.
pub fn generate_subject(config: &SyntheticConfig, index: usize) -> Result<SequenceData, DataError> {
    config.validate()?;
    let profile = FeatureProfile::new(config.seed);
    generate_with_profile(config, &profile, index)
}

fn generate_with_profile(
    config: &SyntheticConfig,
    profile: &FeatureProfile,
    index: usize,
) -> Result<SequenceData, DataError> {
    let subject_id = config.subject_id(index);
    let (group, _) = config.subject_role(index);
    let mut rng = seed::rng_for(config.seed, &format!("subject:{subject_id}"));

    // Signal-bearing modalities, in key order.
    let signals: Vec<(f64, Vec<usize>)> = config
        .modality_snr
        .iter()
        .filter(|(_, snr)| **snr > 0.0)
        .map(|(name, snr)| (*snr, signal_features(name).expect("validated")))
        .collect();

    let (labels, bout) = label_track(config, signals.len(), &mut rng);

    let innov_own = ((1.0 - NOISE_AR * NOISE_AR) * (1.0 - NOISE_SHARED)).sqrt();
    let innov_shared = ((1.0 - NOISE_AR * NOISE_AR) * NOISE_SHARED).sqrt();
    let mut own = [0.0f64; N_FEATURES];
    let mut shared = [0.0f64; N_JOINTS + 1];
    for v in own.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = z * (1.0 - NOISE_SHARED).sqrt();
    }
    for v in shared.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = z * NOISE_SHARED.sqrt();
    }

    let mut frames = Vec::with_capacity(labels.len());
    let mut shift = [0.0f64; N_FEATURES];
    for (t, &label) in labels.iter().enumerate() {
        for v in own.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = NOISE_AR * *v + innov_own * z;
        }
        for v in shared.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = NOISE_AR * *v + innov_shared * z;
        }
        shift.fill(0.0);
        if let Some((carrier, u)) = bout[t] {
            for (k, (snr, feats)) in signals.iter().enumerate() {
                if carrier != usize::MAX && carrier != k {
                    continue;
                }
                for &j in feats {
                    shift[j] += snr * profile.pattern(j, u);
                }
            }
        }
        let mut features = [0.0; N_FEATURES];
        for j in 0..N_FEATURES {
            let z = own[j] + shared[noise_group(j)] + shift[j];
            features[j] = profile.offset[j] + profile.scale[j] * z;
        }
        frames.push(FrameRecord {
            features,
            extras: [0.0, 0.0],
            label,
        });
    }
    SequenceData::new(subject_id, group, frames)
}

/// Generates every subject of a synthetic dataset. A pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<SequenceData>, DataError> {
    config.validate()?;
    let profile = FeatureProfile::new(config.seed);
    (0..config.n_subjects)
        .into_par_iter()
        .map(|i| generate_with_profile(config, &profile, i))
        .collect()
}

/// Manifest describing a generated dataset written as `<subject_id>.csv` files.
pub fn synthetic_manifest(config: &SyntheticConfig) -> Manifest {
    let records = (0..config.n_subjects)
        .map(|i| {
            let subject_id = config.subject_id(i);
            let (group, split) = config.subject_role(i);
            ManifestRecord {
                path: PathBuf::from(format!("{subject_id}.csv")),
                subject_id,
                group,
                split,
            }
        })
        .collect();
    Manifest {
        records,
        base_dir: PathBuf::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> String {
        values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    fn seq_with_labels(labels: &[u8]) -> SequenceData {
        let frames = labels
            .iter()
            .map(|&label| FrameRecord {
                features: [0.0; N_FEATURES],
                extras: [0.0; 2],
                label,
            })
            .collect();
        SequenceData::new("s", Group::Healthy, frames).unwrap()
    }

    #[test]
    fn maps_columns_and_label() {
        let mut vals: Vec<f64> = (1..=73).map(f64::from).collect();
        vals[72] = 1.0;
        let seq = parse_emopain_file(row(&vals).as_bytes(), "P01", Group::ChronicPain).unwrap();
        let f = &seq.frames()[0];
        assert_eq!(f.label, 1);
        assert_eq!(f.coords_x()[0], 1.0);
        assert_eq!(f.coords_y()[0], 23.0);
        assert_eq!(f.coords_z()[21], 66.0);
        assert_eq!(f.semg(), &[67.0, 68.0, 69.0, 70.0]);
        assert_eq!(f.extras, [71.0, 72.0]);
    }

    #[test]
    fn three_row_fixture_matches_hand_transcription() {
        // Whitespace-delimited; row r, column c (1-based) holds r*100 + c,
        // except the last column which carries the label.
        let mut text = String::new();
        let labels = ["0", "1.0", "0.0000000000001"];
        for r in 1..=3 {
            let cols: Vec<String> = (1..=72).map(|c| format!("{}", r * 100 + c)).collect();
            text.push_str(&cols.join("  "));
            text.push(' ');
            text.push_str(labels[r - 1]);
            text.push('\n');
        }
        let seq = parse_emopain_file(text.as_bytes(), "P02", Group::Healthy).unwrap();
        assert_eq!(seq.len(), 3);
        let expected_first = [101.0, 102.0, 103.0];
        assert_eq!(&seq.frames()[0].features[..3], &expected_first);
        assert_eq!(seq.frames()[1].features[69], 270.0);
        assert_eq!(seq.frames()[2].features[44], 345.0);
        assert_eq!(seq.frames()[2].extras, [371.0, 372.0]);
        let got: Vec<u8> = seq.frames().iter().map(|f| f.label).collect();
        assert_eq!(got, vec![0, 1, 0]);
    }

    #[test]
    fn short_row_is_rejected() {
        let vals: Vec<f64> = (0..70).map(f64::from).collect();
        let err = parse_emopain_file(row(&vals).as_bytes(), "x", Group::Healthy).unwrap_err();
        assert!(matches!(err, DataError::RowTooShort { row: 1, found: 70 }));
    }

    #[test]
    fn parse_errors_carry_position() {
        let mut toks: Vec<String> = (0..73).map(|_| "0".to_string()).collect();
        toks[4] = "abc".into();
        let err = parse_emopain_file(toks.join(",").as_bytes(), "x", Group::Healthy).unwrap_err();
        assert!(matches!(
            err,
            DataError::NonNumericField {
                row: 1,
                column: 5,
                ..
            }
        ));

        toks[4] = "0".into();
        toks[72] = "0.5".into();
        let err = parse_emopain_file(toks.join(",").as_bytes(), "x", Group::Healthy).unwrap_err();
        assert!(matches!(err, DataError::InvalidLabel { row: 1, .. }));

        toks[72] = "0".into();
        toks[10] = "NaN".into();
        let err = parse_emopain_file(toks.join(",").as_bytes(), "x", Group::Healthy).unwrap_err();
        assert!(matches!(err, DataError::NonFiniteField { column: 11, .. }));

        let err = parse_emopain_file(b"\n  \n", "x", Group::Healthy).unwrap_err();
        assert!(matches!(err, DataError::EmptyFile));
    }

    #[test]
    fn window_offsets_and_count() {
        let seq = seq_with_labels(&[0; 10]);
        let p = WindowParams {
            length: 4,
            stride: 2,
            positive_fraction_threshold: 0.5,
        };
        let w = make_windows(&seq, &p).unwrap();
        let starts: Vec<usize> = w.iter().map(Window::start).collect();
        assert_eq!(starts, vec![0, 2, 4, 6]);
        assert!(w.iter().all(|w| w.label == 0));
    }

    #[test]
    fn half_positive_window_is_positive_at_half_threshold() {
        let seq = seq_with_labels(&[0, 0, 1, 1]);
        let p = WindowParams {
            length: 4,
            stride: 1,
            positive_fraction_threshold: 0.5,
        };
        assert_eq!(make_windows(&seq, &p).unwrap()[0].label, 1);
        let p = WindowParams {
            positive_fraction_threshold: 0.75,
            ..p
        };
        assert_eq!(make_windows(&seq, &p).unwrap()[0].label, 0);
    }

    #[test]
    fn window_longer_than_sequence() {
        let seq = seq_with_labels(&[0; 3]);
        let p = WindowParams {
            length: 4,
            stride: 1,
            positive_fraction_threshold: 0.5,
        };
        assert!(matches!(
            make_windows(&seq, &p),
            Err(DataError::WindowLongerThanSequence {
                length: 4,
                frames: 3
            })
        ));
    }

    fn cohort() -> Vec<SequenceData> {
        let cfg = SyntheticConfig {
            frames_per_subject: 10,
            ..SyntheticConfig::default()
        };
        generate_synthetic(&cfg).unwrap()
    }

    #[test]
    fn reference_cohort_split_is_accepted() {
        let cfg = SyntheticConfig::default();
        let seqs = cohort();
        let manifest = synthetic_manifest(&cfg);
        let (train, valid) = split_train_valid(&seqs, &manifest.assignment()).unwrap();
        assert_eq!(train.len(), 16);
        assert_eq!(valid.len(), 7);
        let cp = |v: &[SequenceData]| v.iter().filter(|s| s.group == Group::ChronicPain).count();
        assert_eq!((cp(&train), train.len() - cp(&train)), (10, 6));
        assert_eq!((cp(&valid), valid.len() - cp(&valid)), (4, 3));
    }

    #[test]
    fn split_errors() {
        let seqs = cohort();
        let mut a = synthetic_manifest(&SyntheticConfig::default()).assignment();
        a.valid.push(a.train[0].clone());
        assert!(matches!(
            split_train_valid(&seqs, &a),
            Err(DataError::SubjectInBothSplits(_))
        ));

        let mut a = synthetic_manifest(&SyntheticConfig::default()).assignment();
        a.valid.clear();
        match split_train_valid(&seqs, &a) {
            Err(DataError::UnassignedSubject(ids)) => assert_eq!(ids.len(), 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_parses_and_round_trips() {
        let text = "subject_id,group,split,path\nP01,chronic_pain,train,P01.csv\nP02,healthy,valid,/abs/P02.csv\n";
        let m = Manifest::parse(text.as_bytes()).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[1].group, Group::Healthy);
        assert_eq!(m.records[1].split, Split::Valid);
        assert_eq!(m.to_csv(), text);
        assert!(Manifest::parse(b"subject_id,group,split,path\nP01,sick,train,a\n").is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig {
            n_subjects: 3,
            frames_per_subject: 500,
            seed: 11,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_config_validation() {
        let bad = [
            SyntheticConfig {
                positive_rate: 0.0,
                ..SyntheticConfig::default()
            },
            SyntheticConfig {
                positive_rate: 1.0,
                ..SyntheticConfig::default()
            },
            SyntheticConfig {
                modality_snr: BTreeMap::new(),
                ..SyntheticConfig::default()
            },
            SyntheticConfig {
                modality_snr: BTreeMap::from([("feet".to_string(), 1.0)]),
                ..SyntheticConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(
                generate_synthetic(&cfg),
                Err(DataError::InvalidConfig(_))
            ));
        }
    }
}
