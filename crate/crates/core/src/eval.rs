//! Metrics, the per-arm experiment runner and leave-one-out cross-validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{windows_for, SequenceData, Window, WindowParams};
use crate::error::{Error, ErrorCategory, Result, Stage};
use crate::fusion::{fuse_batch, FusedPrediction, VoteMode};
use crate::modality::{
    bifurcated_scheme, quadrifurcated_scheme, singular_scheme, JointSegmentMap, ModalityScheme,
};
use crate::models::{fit, ClassifierKind, ClassifierSpec, TrainedClassifier};
use crate::seed;
use crate::stats::{average_weights, modality_weights_with, FeatureSummary, FusionWeights};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions, {1} labels")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("cross-validation needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("{0} split has no windows")]
    EmptySplit(&'static str),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
}

impl EvalError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EvalError::InvalidConfig(_) => ErrorCategory::Config,
            _ => ErrorCategory::Data,
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics

/// 2x2 counts with class 1 (protective behaviour) as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

pub fn confusion(
    predicted: &[u8],
    truth: &[u8],
) -> std::result::Result<ConfusionMatrix, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch(predicted.len(), truth.len()));
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision_pos: f64,
    pub recall_pos: f64,
    pub f1_pos: f64,
    pub precision_neg: f64,
    pub recall_neg: f64,
    pub f1_neg: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    /// Names of metrics whose denominator was zero (reported as 0).
    pub degenerate: Vec<&'static str>,
}

fn ratio(num: f64, den: f64, name: &'static str, flags: &mut Vec<&'static str>) -> f64 {
    if den == 0.0 {
        flags.push(name);
        0.0
    } else {
        num / den
    }
}

/// Closed-form metrics. Any 0/0 is reported as 0 and named in `degenerate`.
pub fn metrics(cm: &ConfusionMatrix) -> MetricSet {
    let mut flags = Vec::new();
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, "accuracy", &mut flags);
    let precision_pos = ratio(tp, tp + fp, "precision_pos", &mut flags);
    let recall_pos = ratio(tp, tp + fn_, "recall_pos", &mut flags);
    let f1_pos = ratio(
        2.0 * precision_pos * recall_pos,
        precision_pos + recall_pos,
        "f1_pos",
        &mut flags,
    );
    let precision_neg = ratio(tn, tn + fn_, "precision_neg", &mut flags);
    let recall_neg = ratio(tn, tn + fp, "recall_neg", &mut flags);
    let f1_neg = ratio(
        2.0 * precision_neg * recall_neg,
        precision_neg + recall_neg,
        "f1_neg",
        &mut flags,
    );
    MetricSet {
        accuracy,
        precision_pos,
        recall_pos,
        f1_pos,
        precision_neg,
        recall_neg,
        f1_neg,
        precision_macro: (precision_pos + precision_neg) / 2.0,
        recall_macro: (recall_pos + recall_neg) / 2.0,
        f1_macro: (f1_pos + f1_neg) / 2.0,
        degenerate: flags,
    }
}

// ---------------------------------------------------------------------------
// Experiments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    Statistical,
    Average,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Statistical => "statistical",
            Weighting::Average => "average",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "statistical" => Ok(Weighting::Statistical),
            "average" => Ok(Weighting::Average),
            other => Err(format!(
                "unknown weighting {other:?} (expected statistical or average)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    #[default]
    Subject,
    Sequence,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "subject" => Ok(Granularity::Subject),
            "sequence" => Ok(Granularity::Sequence),
            other => Err(format!(
                "unknown granularity {other:?} (expected subject or sequence)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: ModalityScheme,
    pub weighting: Weighting,
    /// Template spec; each modality's model seed is derived from `seed` and the modality name.
    pub classifier: ClassifierSpec,
    pub window: WindowParams,
    pub threshold: f64,
    pub vote: VoteMode,
    pub summary: FeatureSummary,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(
        scheme: ModalityScheme,
        weighting: Weighting,
        kind: ClassifierKind,
        seed: u64,
    ) -> Self {
        ExperimentConfig {
            scheme,
            weighting,
            classifier: ClassifierSpec::new(kind, seed),
            window: WindowParams::default(),
            threshold: 0.5,
            vote: VoteMode::Soft,
            summary: FeatureSummary::Mean,
            seed,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), Error> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            ))
            .into());
        }
        self.window.validate()?;
        self.classifier.validate(self.window.length)?;
        Ok(())
    }

    /// Spec used for one modality's model.
    pub fn spec_for(&self, modality: &str) -> ClassifierSpec {
        let mut spec = self.classifier.clone();
        spec.seed = seed::derive(self.seed, &format!("model:{modality}"));
        spec
    }

    /// Weighting actually applied; with one modality both modes reduce to the same thing.
    pub fn effective_weighting(&self) -> Option<Weighting> {
        (self.scheme.len() > 1).then_some(self.weighting)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub held_out: String,
    pub n_test: usize,
    pub weights: FusionWeights,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scheme_name: String,
    pub n_modalities: usize,
    pub weighting: Option<Weighting>,
    pub classifier: ClassifierKind,
    pub threshold: f64,
    pub vote: VoteMode,
    pub seed: u64,
    /// Weights of a single train/valid run; per-fold weights live in `folds`.
    pub weights: Option<FusionWeights>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
    pub folds: Vec<FoldReport>,
    pub single_class_modalities: Vec<String>,
}

/// Everything a run produced, for inspection beyond the report.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub weights: FusionWeights,
    pub models: BTreeMap<String, TrainedClassifier>,
    pub predictions: Vec<FusedPrediction>,
    pub truth: Vec<u8>,
    pub subject_ids: Vec<String>,
}

fn derive_weights(
    train: &[Window],
    labels: &[u8],
    config: &ExperimentConfig,
) -> std::result::Result<FusionWeights, Error> {
    match config.effective_weighting() {
        Some(Weighting::Statistical) => Ok(modality_weights_with(
            train,
            labels,
            &config.scheme,
            config.summary,
        )?),
        _ => Ok(average_weights(&config.scheme)),
    }
}

/// Trains one model per modality on `train` and fuses their votes on `valid`.
/// Validation labels are only read when scoring.
pub fn run_experiment(
    train: &[Window],
    valid: &[Window],
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(EvalError::EmptySplit("train").into());
    }
    if valid.is_empty() {
        return Err(EvalError::EmptySplit("valid").into());
    }
    let train_labels: Vec<u8> = train.iter().map(|w| w.label).collect();
    let weights =
        derive_weights(train, &train_labels, config).map_err(|e| Error::at(Stage::Weights, e))?;

    let names: Vec<String> = config.scheme.names().map(str::to_string).collect();
    let fitted: Vec<(TrainedClassifier, Vec<f64>)> = names
        .par_iter()
        .map(|m| -> Result<_> {
            let views = train
                .iter()
                .map(|w| config.scheme.view(w, m))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::at(Stage::Training, e))?;
            let model = fit(&config.spec_for(m), &views, &train_labels)
                .map_err(|e| Error::at(Stage::Training, e))?;
            let probs = valid
                .par_iter()
                .map(|w| -> Result<f64> {
                    let view = config.scheme.view(w, m)?;
                    Ok(model.predict_proba(&view)?)
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(|e| Error::at(Stage::Prediction, e))?;
            Ok((model, probs))
        })
        .collect::<Result<_>>()?;

    let per_window: Vec<BTreeMap<String, f64>> = (0..valid.len())
        .map(|i| {
            names
                .iter()
                .zip(&fitted)
                .map(|(m, (_, p))| (m.clone(), p[i]))
                .collect()
        })
        .collect();
    let predictions = fuse_batch(&per_window, &weights, config.threshold, config.vote)
        .map_err(|e| Error::at(Stage::Fusion, e))?;

    let truth: Vec<u8> = valid.iter().map(|w| w.label).collect();
    let predicted: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let cm = confusion(&predicted, &truth).map_err(|e| Error::at(Stage::Scoring, e))?;

    let models: BTreeMap<String, TrainedClassifier> = names
        .into_iter()
        .zip(fitted.into_iter().map(|(m, _)| m))
        .collect();
    let single_class_modalities = models
        .iter()
        .filter(|(_, m)| m.single_class)
        .map(|(k, _)| k.clone())
        .collect();
    let report = EvalReport {
        scheme_name: config.scheme.name().to_string(),
        n_modalities: config.scheme.len(),
        weighting: config.effective_weighting(),
        classifier: config.classifier.kind,
        threshold: config.threshold,
        vote: config.vote,
        seed: config.seed,
        weights: Some(weights.clone()),
        confusion: cm,
        metrics: metrics(&cm),
        folds: Vec::new(),
        single_class_modalities,
    };
    Ok(ExperimentOutcome {
        report,
        weights,
        models,
        predictions,
        truth,
        subject_ids: valid.iter().map(|w| w.subject_id.clone()).collect(),
    })
}

/// Windows both splits with `config.window` and runs the experiment.
pub fn run_on_sequences(
    train: &[SequenceData],
    valid: &[SequenceData],
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let tw = windows_for(train, &config.window).map_err(|e| Error::at(Stage::Windowing, e))?;
    let vw = windows_for(valid, &config.window).map_err(|e| Error::at(Stage::Windowing, e))?;
    run_experiment(&tw, &vw, config)
}

/// Leave-one-out cross-validation; by default one fold per subject.
pub fn loocv(
    sequences: &[SequenceData],
    config: &ExperimentConfig,
    granularity: Granularity,
) -> Result<EvalReport> {
    config.validate()?;
    // Group sequences into held-out units, in order of first appearance.
    let mut units: Vec<(String, Vec<&SequenceData>)> = Vec::new();
    for (i, s) in sequences.iter().enumerate() {
        let key = match granularity {
            Granularity::Subject => s.subject_id.clone(),
            Granularity::Sequence => format!("{}#{i}", s.subject_id),
        };
        match units.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(s),
            None => units.push((key, vec![s])),
        }
    }
    if units.len() < 2 {
        return Err(EvalError::TooFewSubjects(units.len()).into());
    }
    let unit_windows: Vec<Vec<Window>> = units
        .iter()
        .map(|(_, seqs)| {
            let owned: Vec<SequenceData> = seqs.iter().map(|s| (*s).clone()).collect();
            windows_for(&owned, &config.window)
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::at(Stage::Windowing, e))?;

    let folds: Vec<FoldReport> = (0..units.len())
        .into_par_iter()
        .map(|k| -> Result<FoldReport> {
            let train: Vec<Window> = unit_windows
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .flat_map(|(_, w)| w.iter().cloned())
                .collect();
            let outcome = run_experiment(&train, &unit_windows[k], config)?;
            Ok(FoldReport {
                held_out: units[k].0.clone(),
                n_test: unit_windows[k].len(),
                weights: outcome.weights,
                confusion: outcome.report.confusion,
                metrics: outcome.report.metrics,
            })
        })
        .collect::<Result<_>>()?;

    let pooled = folds
        .iter()
        .fold(ConfusionMatrix::default(), |acc, f| acc.add(&f.confusion));
    Ok(EvalReport {
        scheme_name: config.scheme.name().to_string(),
        n_modalities: config.scheme.len(),
        weighting: config.effective_weighting(),
        classifier: config.classifier.kind,
        threshold: config.threshold,
        vote: config.vote,
        seed: config.seed,
        weights: None,
        confusion: pooled,
        metrics: metrics(&pooled),
        folds,
        single_class_modalities: Vec::new(),
    })
}

/// The four comparison arms: singular; bifurcated and quadrifurcated with
/// statistical weights; quadrifurcated with average weights.
pub fn matrix_arms(joint_map: &JointSegmentMap) -> Result<Vec<(ModalityScheme, Weighting)>> {
    let quad = quadrifurcated_scheme(joint_map)?;
    Ok(vec![
        (singular_scheme(), Weighting::Statistical),
        (bifurcated_scheme(), Weighting::Statistical),
        (quad.clone(), Weighting::Statistical),
        (quad, Weighting::Average),
    ])
}

/// Runs every arm for each classifier in `kinds`, returning reports
/// grouped by classifier.
pub fn run_matrix(
    train: &[Window],
    valid: &[Window],
    template: &ExperimentConfig,
    kinds: &[ClassifierSpec],
    joint_map: &JointSegmentMap,
) -> Result<Vec<EvalReport>> {
    let arms = matrix_arms(joint_map)?;
    let jobs: Vec<ExperimentConfig> = kinds
        .iter()
        .flat_map(|spec| {
            arms.iter()
                .map(move |(scheme, weighting)| ExperimentConfig {
                    scheme: scheme.clone(),
                    weighting: *weighting,
                    classifier: spec.clone(),
                    ..template.clone()
                })
        })
        .collect();
    jobs.par_iter()
        .map(|cfg| run_experiment(train, valid, cfg).map(|o| o.report))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[1, 0, 1, 0], &[1, 0, 0, 0]).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 1,
                fp: 1,
                fn_: 0,
                tn: 2
            }
        );
        let t = [1, 0, 1, 1, 0];
        let same = confusion(&t, &t).unwrap();
        assert_eq!((same.fp, same.fn_), (0, 0));
        let flipped: Vec<u8> = t.iter().map(|v| 1 - v).collect();
        let inv = confusion(&flipped, &t).unwrap();
        assert_eq!((inv.tp, inv.tn), (0, 0));
        assert_eq!(
            confusion(&[1], &[1, 0]),
            Err(EvalError::LengthMismatch(1, 2))
        );
        assert_eq!(confusion(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 2,
        });
        assert_eq!(m.precision_pos, 0.5);
        assert_eq!(m.recall_pos, 1.0);
        assert!((m.f1_pos - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.75);
        assert!(m.degenerate.is_empty());

        let all_neg = metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 171,
            tn: 2698,
        });
        assert!((all_neg.accuracy - 0.940).abs() < 5e-4);
        assert_eq!(all_neg.recall_pos, 0.0);
        assert!(all_neg.degenerate.contains(&"precision_pos"));

        let empty_pos = metrics(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            fn_: 0,
            tn: 5,
        });
        assert_eq!(empty_pos.precision_pos, 0.0);
        assert!(empty_pos.degenerate.contains(&"precision_pos"));
        assert!(empty_pos.degenerate.contains(&"f1_pos"));
    }

    fn small_corpus(seed: u64, n_subjects: usize) -> Vec<SequenceData> {
        let cfg = SyntheticConfig {
            n_subjects,
            frames_per_subject: 900,
            positive_rate: 0.3,
            seed,
            ..SyntheticConfig::default()
        };
        generate_synthetic(&cfg).unwrap()
    }

    fn small_config(scheme: ModalityScheme, weighting: Weighting) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(scheme, weighting, ClassifierKind::Logistic, 7);
        c.window = WindowParams {
            length: 60,
            stride: 30,
            positive_fraction_threshold: 0.5,
        };
        c.classifier.hyperparams.epochs = 5;
        c
    }

    #[test]
    fn singular_weighting_is_vacuous() {
        let seqs = small_corpus(1, 4);
        let (train, valid) = seqs.split_at(3);
        let a = run_on_sequences(
            train,
            valid,
            &small_config(singular_scheme(), Weighting::Statistical),
        )
        .unwrap();
        let b = run_on_sequences(
            train,
            valid,
            &small_config(singular_scheme(), Weighting::Average),
        )
        .unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn loocv_structure() {
        let seqs = small_corpus(2, 4);
        let cfg = small_config(bifurcated_scheme(), Weighting::Statistical);
        let r = loocv(&seqs, &cfg, Granularity::Subject).unwrap();
        assert_eq!(r.folds.len(), 4);
        let total: usize = seqs.iter().map(|s| cfg.window.count(s.len())).sum();
        assert_eq!(r.confusion.total() as usize, total);
        assert_eq!(r.metrics, metrics(&r.confusion));
        assert!(matches!(
            loocv(&seqs[..1], &cfg, Granularity::Subject),
            Err(Error::Eval(EvalError::TooFewSubjects(1)))
        ));
    }

    #[test]
    fn identical_subjects_give_identical_folds() {
        let seqs = small_corpus(3, 1);
        let mut twin = seqs[0].clone();
        twin.subject_id = "S02".to_string();
        let both = vec![seqs[0].clone(), twin];
        let cfg = small_config(bifurcated_scheme(), Weighting::Statistical);
        let r = loocv(&both, &cfg, Granularity::Subject).unwrap();
        assert_eq!(r.folds[0].confusion, r.folds[1].confusion);
    }
}
