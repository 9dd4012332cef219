//! Decision-level fusion of per-modality probabilities.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::stats::FusionWeights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("modality keys differ: predictions {predictions:?}, weights {weights:?}")]
    KeyMismatch {
        predictions: Vec<String>,
        weights: Vec<String>,
    },
    #[error("probability {value} for modality {modality} is outside [0, 1]")]
    ProbabilityOutOfRange { modality: String, value: f64 },
    #[error("threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("window {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<FusionError>,
    },
}

/// Soft voting combines probabilities; hard voting combines thresholded votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoteMode {
    #[default]
    Soft,
    Hard,
}

impl VoteMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VoteMode::Soft => "soft",
            VoteMode::Hard => "hard",
        }
    }
}

impl fmt::Display for VoteMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VoteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "soft" => Ok(VoteMode::Soft),
            "hard" => Ok(VoteMode::Hard),
            other => Err(format!(
                "unknown vote mode {other:?} (expected soft or hard)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction {
    pub per_modality: BTreeMap<String, f64>,
    /// Weighted vote; under hard voting this is the weighted share of positive votes.
    pub fused_probability: f64,
    pub label: u8,
    pub threshold: f64,
}

/// Weighted soft vote. Label is 1 when the fused probability reaches the threshold.
pub fn fuse(
    per_modality: &BTreeMap<String, f64>,
    weights: &FusionWeights,
    threshold: f64,
) -> Result<FusedPrediction, FusionError> {
    fuse_with(per_modality, weights, threshold, VoteMode::Soft)
}

pub fn fuse_with(
    per_modality: &BTreeMap<String, f64>,
    weights: &FusionWeights,
    threshold: f64,
    mode: VoteMode,
) -> Result<FusedPrediction, FusionError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(FusionError::InvalidThreshold(threshold));
    }
    if !per_modality.keys().eq(weights.weights.keys()) {
        return Err(FusionError::KeyMismatch {
            predictions: per_modality.keys().cloned().collect(),
            weights: weights.weights.keys().cloned().collect(),
        });
    }
    for (m, &p) in per_modality {
        if !(0.0..=1.0).contains(&p) {
            return Err(FusionError::ProbabilityOutOfRange {
                modality: m.clone(),
                value: p,
            });
        }
    }
    // BTreeMap iteration is sorted by key, so the sum order is fixed.
    let fused: f64 = per_modality
        .values()
        .zip(weights.weights.values())
        .map(|(&p, &w)| match mode {
            VoteMode::Soft => w * p,
            VoteMode::Hard => w * f64::from(u8::from(p >= threshold)),
        })
        .sum();
    let fused = fused.clamp(0.0, 1.0);
    Ok(FusedPrediction {
        per_modality: per_modality.clone(),
        fused_probability: fused,
        label: u8::from(fused >= threshold),
        threshold,
    })
}

pub fn fuse_batch(
    predictions: &[BTreeMap<String, f64>],
    weights: &FusionWeights,
    threshold: f64,
    mode: VoteMode,
) -> Result<Vec<FusedPrediction>, FusionError> {
    predictions
        .iter()
        .enumerate()
        .map(|(index, p)| {
            fuse_with(p, weights, threshold, mode).map_err(|e| FusionError::AtIndex {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// One CSV row per window, with per-modality columns in sorted key order.
pub fn predictions_csv(rows: &[FusedPrediction], subject_ids: &[String], truth: &[u8]) -> String {
    let modalities: Vec<&String> = rows
        .first()
        .map(|r| r.per_modality.keys().collect())
        .unwrap_or_default();
    let mut out = String::from("window_index,subject_id");
    for m in &modalities {
        out.push_str(&format!(",p_{m}"));
    }
    out.push_str(",fused_probability,label,true_label\n");
    for (i, ((row, id), y)) in rows.iter().zip(subject_ids).zip(truth).enumerate() {
        out.push_str(&format!("{i},{id}"));
        for p in row.per_modality.values() {
            out.push_str(&format!(",{p}"));
        }
        out.push_str(&format!(",{},{},{y}\n", row.fused_probability, row.label));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{weights_from_relevance, Provenance};

    fn weights(pairs: &[(&str, f64)]) -> FusionWeights {
        let raw = pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        weights_from_relevance("test", raw)
    }

    fn probs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn weighted_example() {
        let w = weights(&[("A", 0.75), ("B", 0.25)]);
        let f = fuse(&probs(&[("A", 0.8), ("B", 0.2)]), &w, 0.5).unwrap();
        assert!((f.fused_probability - 0.65).abs() < 1e-12);
        assert_eq!(f.label, 1);
    }

    #[test]
    fn equal_weights_low_probs() {
        let w = weights(&[("a", 1.0), ("b", 1.0), ("c", 1.0), ("d", 1.0)]);
        let p = probs(&[("a", 0.2), ("b", 0.2), ("c", 0.2), ("d", 0.2)]);
        let f = fuse(&p, &w, 0.5).unwrap();
        assert!((f.fused_probability - 0.2).abs() < 1e-12);
        assert_eq!(f.label, 0);
    }

    #[test]
    fn singular_passes_probability_through() {
        let w = weights(&[("all", 0.3)]);
        assert_eq!(w.provenance, Provenance::Singular);
        let f = fuse(&probs(&[("all", 0.437)]), &w, 0.5).unwrap();
        assert_eq!(f.fused_probability, 0.437);
    }

    #[test]
    fn threshold_tie_is_positive() {
        let w = weights(&[("a", 1.0), ("b", 1.0)]);
        let f = fuse(&probs(&[("a", 0.25), ("b", 0.75)]), &w, 0.5).unwrap();
        assert_eq!(f.fused_probability, 0.5);
        assert_eq!(f.label, 1);
    }

    #[test]
    fn hard_vote() {
        let w = weights(&[("a", 0.6), ("b", 0.4)]);
        let f = fuse_with(&probs(&[("a", 0.51), ("b", 0.1)]), &w, 0.5, VoteMode::Hard).unwrap();
        assert!((f.fused_probability - 0.6).abs() < 1e-12);
        assert_eq!(f.label, 1);
    }

    #[test]
    fn errors() {
        let w = weights(&[("a", 1.0), ("b", 1.0)]);
        assert!(matches!(
            fuse(&probs(&[("a", 0.5)]), &w, 0.5),
            Err(FusionError::KeyMismatch { .. })
        ));
        assert!(matches!(
            fuse(&probs(&[("a", 0.5), ("b", 1.2)]), &w, 0.5),
            Err(FusionError::ProbabilityOutOfRange { .. })
        ));
        assert!(fuse(&probs(&[("a", 0.5), ("b", 0.5)]), &w, 1.0).is_err());
        let batch = vec![
            probs(&[("a", 0.5), ("b", 0.5)]),
            probs(&[("a", -0.1), ("b", 0.5)]),
        ];
        match fuse_batch(&batch, &w, 0.5, VoteMode::Soft) {
            Err(FusionError::AtIndex { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_preserves_order() {
        let w = weights(&[("a", 2.0), ("b", 1.0)]);
        assert!(fuse_batch(&[], &w, 0.5, VoteMode::Soft).unwrap().is_empty());
        let batch: Vec<_> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&p| probs(&[("a", p), ("b", 0.3)]))
            .collect();
        let out = fuse_batch(&batch, &w, 0.5, VoteMode::Soft).unwrap();
        assert_eq!(out.len(), 3);
        for (o, p) in out.iter().zip(&batch) {
            assert_eq!(*o, fuse(p, &w, 0.5).unwrap());
        }
    }

    #[test]
    fn csv_layout() {
        let w = weights(&[("semg", 1.0), ("coords", 1.0)]);
        let f = fuse(&probs(&[("semg", 0.2), ("coords", 0.6)]), &w, 0.5).unwrap();
        let csv = predictions_csv(&[f], &["S01".to_string()], &[1]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "window_index,subject_id,p_coords,p_semg,fused_probability,label,true_label"
        );
        assert_eq!(lines.next().unwrap(), "0,S01,0.6,0.2,0.4,0,1");
    }
}
