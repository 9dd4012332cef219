//! Correlation-weighted, decision-level multimodal fusion for protective-behaviour
//! recognition from joint-coordinate and sEMG streams.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`data`] parses row-per-frame recordings (or generates synthetic ones) and
//!    cuts them into fixed-length labelled windows.
//! 2. [`modality`] partitions the 70 features into named modalities.
//! 3. [`stats`] ranks features against the label with Spearman's rho and turns
//!    the per-modality relevance into fusion weights.
//! 4. [`models`] trains one classifier per modality.
//! 5. [`fusion`] combines the per-modality probabilities, and [`eval`] scores
//!    the fused labels under holdout or leave-one-subject-out protocols.

pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod modality;
pub mod models;
pub mod report;
pub mod seed;
pub mod stats;

pub use data::{FrameRecord, Group, SequenceData, SyntheticConfig, Window, WindowParams};
pub use error::{Error, ErrorCategory};
pub use eval::{ConfusionMatrix, EvalReport, ExperimentConfig, MetricSet, Weighting};
pub use fusion::{FusedPrediction, VoteMode};
pub use modality::{JointSegmentMap, ModalityScheme, Segment};
pub use models::{ClassifierKind, ClassifierSpec, TrainedClassifier};
pub use stats::{CorrelationResult, FusionWeights, NormalityReport, Provenance};

/// Joint-coordinate features per frame (22 joints x 3 axes).
pub const N_COORDS: usize = 66;
/// sEMG channels per frame.
pub const N_SEMG: usize = 4;
/// Features per frame.
pub const N_FEATURES: usize = N_COORDS + N_SEMG;
/// Tracked body joints.
pub const N_JOINTS: usize = 22;
