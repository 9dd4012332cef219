//! Python bindings for the `painfusion` core.

use std::collections::BTreeMap;
use std::path::Path;

use painfusion::data::{
    generate_synthetic, split_train_valid, synthetic_manifest, windows_for, Manifest,
    SplitAssignment,
};
use painfusion::eval::{
    confusion, loocv as run_loocv, metrics as metric_set, run_matrix, run_on_sequences, Granularity,
};
use painfusion::fusion::fuse_with;
use painfusion::stats::{
    average_weights, kendall_tau_b, modality_weights, normality_report, pearson_r, spearman_rho,
};
use painfusion::{
    ClassifierKind, ClassifierSpec, EvalReport, ExperimentConfig, JointSegmentMap, MetricSet,
    ModalityScheme, Provenance, SequenceData, SyntheticConfig, VoteMode, Weighting, WindowParams,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn metrics_dict(m: &MetricSet) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("accuracy", m.accuracy),
        ("precision_pos", m.precision_pos),
        ("recall_pos", m.recall_pos),
        ("f1_pos", m.f1_pos),
        ("precision_neg", m.precision_neg),
        ("recall_neg", m.recall_neg),
        ("f1_neg", m.f1_neg),
        ("precision_macro", m.precision_macro),
        ("recall_macro", m.recall_macro),
        ("f1_macro", m.f1_macro),
    ])
}

/// Recordings plus their train/valid assignment.
#[pyclass(frozen)]
struct Dataset {
    sequences: Vec<SequenceData>,
    assignment: SplitAssignment,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (seed, n_subjects=23, frames_per_subject=6000, modality_snr=None, complementary=false))]
    fn synthetic(
        py: Python<'_>,
        seed: u64,
        n_subjects: usize,
        frames_per_subject: usize,
        modality_snr: Option<BTreeMap<String, f64>>,
        complementary: bool,
    ) -> PyResult<Dataset> {
        let mut config = SyntheticConfig {
            n_subjects,
            frames_per_subject,
            seed,
            complementary,
            ..SyntheticConfig::default()
        };
        if let Some(snr) = modality_snr {
            config.modality_snr = snr;
        }
        let sequences = py.detach(|| generate_synthetic(&config)).map_err(err)?;
        Ok(Dataset {
            sequences,
            assignment: synthetic_manifest(&config).assignment(),
        })
    }

    #[staticmethod]
    fn from_manifest(path: &str) -> PyResult<Dataset> {
        let manifest = Manifest::load(Path::new(path)).map_err(err)?;
        Ok(Dataset {
            sequences: manifest.load_sequences().map_err(err)?,
            assignment: manifest.assignment(),
        })
    }

    #[getter]
    fn subjects(&self) -> Vec<String> {
        self.sequences
            .iter()
            .map(|s| s.subject_id.clone())
            .collect()
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.sequences.iter().map(SequenceData::len).sum()
    }

    /// Frame-level positive rate over all recordings.
    #[getter]
    fn positive_rate(&self) -> f64 {
        let positives: f64 = self
            .sequences
            .iter()
            .map(|s| s.positive_rate() * s.len() as f64)
            .sum();
        positives / self.n_frames() as f64
    }

    /// Fusion weights from the training split.
    #[pyo3(signature = (scheme="quadrifurcated", weighting="statistical", window_length=180, stride=45))]
    fn weights(
        &self,
        py: Python<'_>,
        scheme: &str,
        weighting: &str,
        window_length: usize,
        stride: usize,
    ) -> PyResult<FusionWeights> {
        let scheme = ModalityScheme::by_name(scheme, &JointSegmentMap::default()).map_err(err)?;
        let weighting: Weighting = weighting.parse().map_err(err)?;
        let params = window(window_length, stride);
        let (train, _) = self.split()?;
        let w = py.detach(|| -> Result<_, painfusion::Error> {
            Ok(match weighting {
                Weighting::Statistical => {
                    let windows = windows_for(&train, &params)?;
                    let labels: Vec<u8> = windows.iter().map(|w| w.label).collect();
                    modality_weights(&windows, &labels, &scheme)?
                }
                Weighting::Average => average_weights(&scheme),
            })
        });
        Ok(FusionWeights(w.map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(subjects={}, frames={})",
            self.sequences.len(),
            self.n_frames()
        )
    }
}

impl Dataset {
    fn split(&self) -> PyResult<(Vec<SequenceData>, Vec<SequenceData>)> {
        split_train_valid(&self.sequences, &self.assignment).map_err(err)
    }
}

fn window(length: usize, stride: usize) -> WindowParams {
    WindowParams {
        length,
        stride,
        ..WindowParams::default()
    }
}

#[pyclass(frozen)]
struct FusionWeights(painfusion::FusionWeights);

#[pymethods]
impl FusionWeights {
    #[getter]
    fn scheme(&self) -> &str {
        &self.0.scheme_name
    }

    #[getter]
    fn provenance(&self) -> &'static str {
        self.0.provenance.as_str()
    }

    #[getter]
    fn weights(&self) -> BTreeMap<String, f64> {
        self.0.weights.clone()
    }

    #[getter]
    fn raw_relevance(&self) -> BTreeMap<String, f64> {
        self.0.raw_relevance.clone()
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn __repr__(&self) -> String {
        format!("FusionWeights({}, {:?})", self.0.provenance, self.0.weights)
    }
}

#[pyclass(frozen)]
struct Report(EvalReport);

#[pymethods]
impl Report {
    #[getter]
    fn scheme(&self) -> &str {
        &self.0.scheme_name
    }

    /// `statistical`, `average` or `singular`.
    #[getter]
    fn weighting(&self) -> &'static str {
        self.0.weighting.map_or("singular", Weighting::as_str)
    }

    #[getter]
    fn classifier(&self) -> String {
        self.0.classifier.to_string()
    }

    /// `(tp, fp, fn, tn)`.
    #[getter]
    fn confusion(&self) -> (u64, u64, u64, u64) {
        let c = &self.0.confusion;
        (c.tp, c.fp, c.fn_, c.tn)
    }

    #[getter]
    fn metrics(&self) -> BTreeMap<&'static str, f64> {
        metrics_dict(&self.0.metrics)
    }

    #[getter]
    fn n_folds(&self) -> usize {
        self.0.folds.len()
    }

    fn to_text(&self) -> String {
        painfusion::report::report_text(&self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report({}, {}, {}, f1_pos={:.4})",
            self.scheme(),
            self.weighting(),
            self.0.classifier,
            self.0.metrics.f1_pos
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    scheme: &str,
    weighting: &str,
    classifier: &str,
    seed: u64,
    epochs: Option<usize>,
    threshold: f64,
    window_length: usize,
    stride: usize,
) -> PyResult<ExperimentConfig> {
    let scheme = ModalityScheme::by_name(scheme, &JointSegmentMap::default()).map_err(err)?;
    let kind: ClassifierKind = classifier.parse().map_err(err)?;
    let mut config = ExperimentConfig::new(scheme, weighting.parse().map_err(err)?, kind, seed);
    if let Some(e) = epochs {
        config.classifier.hyperparams.epochs = e;
    }
    config.threshold = threshold;
    config.window = window(window_length, stride);
    Ok(config)
}

/// Trains on the train split and scores the fused labels on the valid split.
#[pyfunction]
#[pyo3(signature = (dataset, seed, scheme="quadrifurcated", weighting="statistical", classifier="cnn1d",
                    epochs=None, threshold=0.5, window_length=180, stride=45))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    dataset: &Dataset,
    seed: u64,
    scheme: &str,
    weighting: &str,
    classifier: &str,
    epochs: Option<usize>,
    threshold: f64,
    window_length: usize,
    stride: usize,
) -> PyResult<Report> {
    let config = experiment(
        scheme,
        weighting,
        classifier,
        seed,
        epochs,
        threshold,
        window_length,
        stride,
    )?;
    let (train, valid) = dataset.split()?;
    let outcome = py
        .detach(|| run_on_sequences(&train, &valid, &config))
        .map_err(err)?;
    Ok(Report(outcome.report))
}

/// The four comparison arms for each classifier.
#[pyfunction]
#[pyo3(signature = (dataset, seed, classifiers=vec!["logistic".to_string(), "mlp".to_string(), "cnn1d".to_string()],
                    epochs=None, window_length=180, stride=45))]
fn matrix(
    py: Python<'_>,
    dataset: &Dataset,
    seed: u64,
    classifiers: Vec<String>,
    epochs: Option<usize>,
    window_length: usize,
    stride: usize,
) -> PyResult<Vec<Report>> {
    let template = experiment(
        "singular",
        "statistical",
        "logistic",
        seed,
        epochs,
        0.5,
        window_length,
        stride,
    )?;
    let specs = classifiers
        .iter()
        .map(|c| {
            let mut spec = ClassifierSpec::new(c.parse().map_err(err)?, seed);
            if let Some(e) = epochs {
                spec.hyperparams.epochs = e;
            }
            Ok(spec)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let (train, valid) = dataset.split()?;
    let reports = py
        .detach(|| -> Result<_, painfusion::Error> {
            let tw = windows_for(&train, &template.window)?;
            let vw = windows_for(&valid, &template.window)?;
            run_matrix(&tw, &vw, &template, &specs, &JointSegmentMap::default())
        })
        .map_err(err)?;
    Ok(reports.into_iter().map(Report).collect())
}

/// Leave-one-subject-out cross-validation over every recording.
#[pyfunction]
#[pyo3(signature = (dataset, seed, scheme="quadrifurcated", weighting="statistical", classifier="cnn1d",
                    epochs=None, window_length=180, stride=45, granularity="subject"))]
#[allow(clippy::too_many_arguments)]
fn loocv(
    py: Python<'_>,
    dataset: &Dataset,
    seed: u64,
    scheme: &str,
    weighting: &str,
    classifier: &str,
    epochs: Option<usize>,
    window_length: usize,
    stride: usize,
    granularity: &str,
) -> PyResult<Report> {
    let config = experiment(
        scheme,
        weighting,
        classifier,
        seed,
        epochs,
        0.5,
        window_length,
        stride,
    )?;
    let granularity: Granularity = granularity.parse().map_err(err)?;
    let report = py
        .detach(|| run_loocv(&dataset.sequences, &config, granularity))
        .map_err(err)?;
    Ok(Report(report))
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    Ok(pearson_r(&x, &y).map_err(err)?.coefficient)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    Ok(spearman_rho(&x, &y).map_err(err)?.coefficient)
}

#[pyfunction]
fn kendall(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    Ok(kendall_tau_b(&x, &y).map_err(err)?.coefficient)
}

/// Moments and the Jarque-Bera test of one sample.
#[pyfunction]
fn normality(values: Vec<f64>) -> PyResult<BTreeMap<&'static str, f64>> {
    let r = normality_report(&values).map_err(err)?;
    Ok(BTreeMap::from([
        ("n", r.n as f64),
        ("mean", r.mean),
        ("std", r.std),
        ("skewness", r.skewness),
        ("excess_kurtosis", r.excess_kurtosis),
        ("jarque_bera_stat", r.jarque_bera_stat),
        ("jarque_bera_p", r.jarque_bera_p),
    ]))
}

/// Weighted vote over per-modality probabilities; returns `(fused, label)`.
#[pyfunction]
#[pyo3(signature = (probabilities, weights, threshold=0.5, vote="soft"))]
fn fuse(
    probabilities: BTreeMap<String, f64>,
    weights: BTreeMap<String, f64>,
    threshold: f64,
    vote: &str,
) -> PyResult<(f64, u8)> {
    let mode: VoteMode = vote.parse().map_err(err)?;
    let w = painfusion::FusionWeights {
        scheme_name: "custom".into(),
        raw_relevance: weights.clone(),
        weights,
        provenance: Provenance::Statistical,
    };
    let p = fuse_with(&probabilities, &w, threshold, mode).map_err(err)?;
    Ok((p.fused_probability, p.label))
}

/// Metrics of predicted against true binary labels.
#[pyfunction]
fn metrics(predicted: Vec<u8>, truth: Vec<u8>) -> PyResult<BTreeMap<&'static str, f64>> {
    let cm = confusion(&predicted, &truth).map_err(err)?;
    Ok(metrics_dict(&metric_set(&cm)))
}

#[pymodule]
fn painfusion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<FusionWeights>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(matrix, m)?)?;
    m.add_function(wrap_pyfunction!(loocv, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(kendall, m)?)?;
    m.add_function(wrap_pyfunction!(normality, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
