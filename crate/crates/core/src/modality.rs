//! Feature partitions: singular, bifurcated and quadrifurcated schemes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{FeatureMatrix, FrameSource, Window};
use crate::{N_COORDS, N_FEATURES, N_JOINTS};

pub const ALL: &str = "all";
pub const COORDS: &str = "coords";
pub const SEMG: &str = "semg";

/// Default joint-to-segment assignment shipped with the crate.
pub const DEFAULT_JOINT_MAP: &str = include_str!("../../../configs/joint_map.txt");

#[derive(Debug, Error, PartialEq)]
pub enum ModalityError {
    #[error("invalid joint map: {0}")]
    InvalidJointMap(String),
    #[error("invalid modality scheme: {0}")]
    InvalidScheme(String),
    #[error("unknown modality {0:?}")]
    UnknownModality(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    UpperLimbs,
    LowerLimbs,
    Trunk,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::UpperLimbs, Segment::LowerLimbs, Segment::Trunk];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::UpperLimbs => "upper_limbs",
            Segment::LowerLimbs => "lower_limbs",
            Segment::Trunk => "trunk",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = ModalityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Segment::ALL
            .into_iter()
            .find(|seg| seg.as_str() == s)
            .ok_or_else(|| ModalityError::InvalidJointMap(format!("unknown segment {s:?}")))
    }
}

/// Body segment of each of the 22 tracked joints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointSegmentMap {
    assignments: [Segment; N_JOINTS],
}

impl JointSegmentMap {
    pub fn new(assignments: [Segment; N_JOINTS]) -> Result<Self, ModalityError> {
        for seg in Segment::ALL {
            if !assignments.contains(&seg) {
                return Err(ModalityError::InvalidJointMap(format!(
                    "segment {seg} has no joints"
                )));
            }
        }
        Ok(JointSegmentMap { assignments })
    }

    /// Parses `joint_index segment_name` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ModalityError> {
        let mut slots: [Option<Segment>; N_JOINTS] = [None; N_JOINTS];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err =
                |m: String| ModalityError::InvalidJointMap(format!("line {}: {m}", lineno + 1));
            let mut parts = line.split_whitespace();
            let (Some(idx), Some(seg), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err("expected `joint_index segment_name`".into()));
            };
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad joint index {idx:?}")))?;
            if idx >= N_JOINTS {
                return Err(err(format!("joint index {idx} out of range 0..{N_JOINTS}")));
            }
            if slots[idx].is_some() {
                return Err(err(format!("joint {idx} assigned twice")));
            }
            slots[idx] = Some(seg.parse().map_err(|e: ModalityError| err(e.to_string()))?);
        }
        let mut assignments = [Segment::Trunk; N_JOINTS];
        for (j, slot) in slots.iter().enumerate() {
            assignments[j] = slot.ok_or_else(|| {
                ModalityError::InvalidJointMap(format!("joint {j} has no assignment"))
            })?;
        }
        JointSegmentMap::new(assignments)
    }

    pub fn segment(&self, joint: usize) -> Segment {
        self.assignments[joint]
    }

    pub fn joints_in(&self, segment: Segment) -> impl Iterator<Item = usize> + '_ {
        (0..N_JOINTS).filter(move |&j| self.assignments[j] == segment)
    }

    pub fn to_text(&self) -> String {
        self.assignments
            .iter()
            .enumerate()
            .map(|(j, s)| format!("{j} {s}\n"))
            .collect()
    }
}

impl Default for JointSegmentMap {
    fn default() -> Self {
        JointSegmentMap::parse(DEFAULT_JOINT_MAP).expect("shipped joint map is valid")
    }
}

/// Named partition of the 70 feature indices.
///
/// Modalities are keyed by name in sorted order; every index in `0..70`
/// belongs to exactly one modality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalityScheme {
    name: String,
    modalities: BTreeMap<String, Vec<usize>>,
}

impl ModalityScheme {
    pub fn new(
        name: impl Into<String>,
        modalities: BTreeMap<String, Vec<usize>>,
    ) -> Result<Self, ModalityError> {
        let mut seen = BTreeSet::new();
        let mut modalities = modalities;
        for (m, idx) in modalities.iter_mut() {
            if idx.is_empty() {
                return Err(ModalityError::InvalidScheme(format!(
                    "modality {m:?} is empty"
                )));
            }
            idx.sort_unstable();
            for &i in idx.iter() {
                if i >= N_FEATURES {
                    return Err(ModalityError::InvalidScheme(format!(
                        "feature {i} out of range in {m:?}"
                    )));
                }
                if !seen.insert(i) {
                    return Err(ModalityError::InvalidScheme(format!(
                        "feature {i} assigned more than once"
                    )));
                }
            }
        }
        if seen.len() != N_FEATURES {
            return Err(ModalityError::InvalidScheme(format!(
                "{} of {N_FEATURES} features assigned",
                seen.len()
            )));
        }
        Ok(ModalityScheme {
            name: name.into(),
            modalities,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.modalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modalities.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.modalities.keys().map(String::as_str)
    }

    pub fn modalities(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.modalities
    }

    pub fn indices(&self, modality: &str) -> Result<&[usize], ModalityError> {
        self.modalities
            .get(modality)
            .map(Vec::as_slice)
            .ok_or_else(|| ModalityError::UnknownModality(modality.to_string()))
    }

    /// Zero-copy view of one modality's columns of a window.
    pub fn view<'a>(
        &'a self,
        window: &'a Window,
        modality: &str,
    ) -> Result<ModalityView<'a>, ModalityError> {
        Ok(ModalityView {
            window,
            columns: self.indices(modality)?,
        })
    }

    /// Scheme by name: `singular`, `bifurcated` or `quadrifurcated`.
    pub fn by_name(name: &str, joint_map: &JointSegmentMap) -> Result<Self, ModalityError> {
        match name {
            "singular" => Ok(singular_scheme()),
            "bifurcated" => Ok(bifurcated_scheme()),
            "quadrifurcated" => quadrifurcated_scheme(joint_map),
            other => Err(ModalityError::InvalidScheme(format!(
                "unknown scheme {other:?}"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        let mut out = format!("scheme = {}\n", self.name);
        for (m, idx) in &self.modalities {
            let list: Vec<String> = idx.iter().map(usize::to_string).collect();
            out.push_str(&format!("modality.{m} = {}\n", list.join(" ")));
        }
        out
    }
}

/// Columns of one modality within a window.
#[derive(Debug, Clone, Copy)]
pub struct ModalityView<'a> {
    window: &'a Window,
    columns: &'a [usize],
}

impl FrameSource for ModalityView<'_> {
    fn n_frames(&self) -> usize {
        self.window.len()
    }

    fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn value(&self, frame: usize, feature: usize) -> f64 {
        self.window.frame(frame).features[self.columns[feature]]
    }
}

pub fn singular_scheme() -> ModalityScheme {
    let m = BTreeMap::from([(ALL.to_string(), (0..N_FEATURES).collect())]);
    ModalityScheme::new("singular", m).expect("singular scheme is a partition")
}

pub fn bifurcated_scheme() -> ModalityScheme {
    let m = BTreeMap::from([
        (COORDS.to_string(), (0..N_COORDS).collect()),
        (SEMG.to_string(), (N_COORDS..N_FEATURES).collect()),
    ]);
    ModalityScheme::new("bifurcated", m).expect("bifurcated scheme is a partition")
}

/// Joints grouped by body segment (X, Y and Z of a joint stay together) plus sEMG.
pub fn quadrifurcated_scheme(map: &JointSegmentMap) -> Result<ModalityScheme, ModalityError> {
    let mut m: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for seg in Segment::ALL {
        let idx: Vec<usize> = map
            .joints_in(seg)
            .flat_map(|j| [j, N_JOINTS + j, 2 * N_JOINTS + j])
            .collect();
        if idx.is_empty() {
            return Err(ModalityError::InvalidJointMap(format!(
                "segment {seg} has no joints"
            )));
        }
        m.insert(seg.as_str().to_string(), idx);
    }
    m.insert(SEMG.to_string(), (N_COORDS..N_FEATURES).collect());
    ModalityScheme::new("quadrifurcated", m)
}

/// Copies one modality's columns out of a window, in the scheme's index order.
pub fn project(
    window: &Window,
    scheme: &ModalityScheme,
    modality: &str,
) -> Result<FeatureMatrix, ModalityError> {
    let cols = scheme.indices(modality)?;
    let mut data = Vec::with_capacity(window.len() * cols.len());
    for t in 0..window.len() {
        let f = &window.frame(t).features;
        data.extend(cols.iter().map(|&c| f[c]));
    }
    Ok(FeatureMatrix::new(window.len(), cols.len(), data))
}
