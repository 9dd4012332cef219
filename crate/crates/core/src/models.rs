//! Per-modality binary classifiers trained from scratch.
//!
//! Three architectures share one training loop: class-weighted binary
//! cross-entropy with an L2 penalty, minimised by mini-batch SGD with
//! momentum. Inputs are standardised per feature with training-set
//! statistics stored in the model.
//!
//! Parameter layouts (flat vector):
//!
//! * logistic: `w[k], b`
//! * mlp: `w1[h][k], b1[h], w2[h], b2`
//! * cnn1d: `conv[c][kw][k], conv_b[c], dense[c], dense_b`

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::FrameSource;
use crate::error::ErrorCategory;
use crate::seed;

/// Standard deviation floor; features at or below it standardise to zero.
pub const STD_FLOOR: f64 = 1e-8;
/// Finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_EPS: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;
const CHECKPOINT_MAGIC: &str = "painfusion-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("a ReLU or max-pool kink lies within finite-difference reach")]
    KinkNearby,
    #[error("invalid classifier spec: {0}")]
    InvalidSpec(String),
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    CheckpointVersion { found: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl ModelError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            ModelError::DivergedLoss { .. } | ModelError::NonFiniteGradient => {
                ErrorCategory::Numeric
            }
            ModelError::InvalidSpec(_) => ErrorCategory::Config,
            ModelError::KinkNearby => ErrorCategory::Internal,
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Logistic,
    Mlp,
    Cnn1d,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::Logistic,
        ClassifierKind::Mlp,
        ClassifierKind::Cnn1d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Cnn1d => "cnn1d",
        }
    }

    /// Row label used in the human-readable results table.
    pub fn display_name(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "Logistic",
            ClassifierKind::Mlp => "MLP",
            ClassifierKind::Cnn1d => "CNN",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::InvalidSpec(format!("unknown classifier kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub hidden_units: usize,
    pub conv_channels: usize,
    pub kernel_width: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    /// `None` means n_neg / n_pos of the training labels.
    pub positive_class_weight: Option<f64>,
}

impl Hyperparams {
    pub fn defaults(kind: ClassifierKind) -> Self {
        let base = Hyperparams {
            hidden_units: 16,
            conv_channels: 8,
            kernel_width: 5,
            learning_rate: 0.02,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            l2_lambda: 1e-4,
            positive_class_weight: None,
        };
        match kind {
            ClassifierKind::Logistic => Hyperparams {
                learning_rate: 0.02,
                epochs: 30,
                ..base
            },
            ClassifierKind::Mlp => Hyperparams {
                learning_rate: 0.01,
                epochs: 30,
                ..base
            },
            ClassifierKind::Cnn1d => Hyperparams {
                learning_rate: 0.005,
                epochs: 15,
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub hyperparams: Hyperparams,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind, seed: u64) -> Self {
        ClassifierSpec {
            kind,
            hyperparams: Hyperparams::defaults(kind),
            seed,
        }
    }

    /// Sets a hyperparameter by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ModelError> {
        let hp = &mut self.hyperparams;
        let as_count = |v: f64| -> Result<usize, ModelError> {
            if v.fract() == 0.0 && (1.0..=1e9).contains(&v) {
                Ok(v as usize)
            } else {
                Err(ModelError::InvalidSpec(format!(
                    "{key} must be a positive integer, got {v}"
                )))
            }
        };
        match key {
            "hidden_units" => hp.hidden_units = as_count(value)?,
            "conv_channels" => hp.conv_channels = as_count(value)?,
            "kernel_width" => hp.kernel_width = as_count(value)?,
            "epochs" => hp.epochs = as_count(value)?,
            "batch_size" => hp.batch_size = as_count(value)?,
            "learning_rate" => hp.learning_rate = value,
            "momentum" => hp.momentum = value,
            "l2_lambda" => hp.l2_lambda = value,
            "positive_class_weight" => hp.positive_class_weight = Some(value),
            other => {
                return Err(ModelError::InvalidSpec(format!(
                    "unknown hyperparameter {other:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn hyperparam_map(&self) -> BTreeMap<String, f64> {
        let hp = &self.hyperparams;
        let mut m = BTreeMap::from([
            ("hidden_units".to_string(), hp.hidden_units as f64),
            ("conv_channels".to_string(), hp.conv_channels as f64),
            ("kernel_width".to_string(), hp.kernel_width as f64),
            ("learning_rate".to_string(), hp.learning_rate),
            ("momentum".to_string(), hp.momentum),
            ("epochs".to_string(), hp.epochs as f64),
            ("batch_size".to_string(), hp.batch_size as f64),
            ("l2_lambda".to_string(), hp.l2_lambda),
        ]);
        if let Some(w) = hp.positive_class_weight {
            m.insert("positive_class_weight".to_string(), w);
        }
        m
    }

    pub fn validate(&self, window_length: usize) -> Result<(), ModelError> {
        let hp = &self.hyperparams;
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                hp.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&hp.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", hp.momentum));
        }
        if !(hp.l2_lambda >= 0.0 && hp.l2_lambda.is_finite()) {
            return bad(format!("l2_lambda must be >= 0, got {}", hp.l2_lambda));
        }
        if let Some(w) = hp.positive_class_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("positive_class_weight must be positive, got {w}"));
            }
        }
        for (name, v) in [
            ("hidden_units", hp.hidden_units),
            ("conv_channels", hp.conv_channels),
            ("kernel_width", hp.kernel_width),
            ("epochs", hp.epochs),
            ("batch_size", hp.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.kind == ClassifierKind::Cnn1d && hp.kernel_width > window_length {
            return bad(format!(
                "kernel_width {} exceeds window length {window_length}",
                hp.kernel_width
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Architectures

/// Cached activations from a forward pass, consumed by `backprop`.
#[derive(Debug, Default, Clone)]
struct Scratch {
    hidden: Vec<f64>,
    argmax: Vec<usize>,
}

/// A differentiable scalar-logit network over one standardised input.
///
/// `pooled` networks receive the time-mean feature vector; the others receive
/// the whole `frames x features` window, row-major.
trait Network: Send + Sync {
    fn n_params(&self) -> usize;
    fn pooled(&self) -> bool;
    /// Fan-in of each parameter's unit, or 0 for biases.
    fn fan_in(&self, param: usize) -> usize;
    fn logit(&self, params: &[f64], x: &[f64], scratch: &mut Scratch) -> f64;
    fn backprop(&self, params: &[f64], x: &[f64], scratch: &Scratch, dlogit: f64, grad: &mut [f64]);
    /// Whether a parameter perturbation of `eps` could cross a non-differentiable point.
    fn near_kink(&self, _params: &[f64], _x: &[f64], _margin: f64) -> bool {
        false
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.n_params())
            .map(|i| match self.fan_in(i) {
                0 => 0.0,
                fan => {
                    let limit = (6.0 / fan as f64).sqrt();
                    rng.random_range(-limit..limit)
                }
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four fixed accumulators: deterministic and pipelines well
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = 4 * i;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

struct Logistic {
    k: usize,
}

impl Network for Logistic {
    fn n_params(&self) -> usize {
        self.k + 1
    }

    fn pooled(&self) -> bool {
        true
    }

    fn fan_in(&self, param: usize) -> usize {
        if param < self.k {
            self.k
        } else {
            0
        }
    }

    fn logit(&self, p: &[f64], x: &[f64], _: &mut Scratch) -> f64 {
        dot(&p[..self.k], x) + p[self.k]
    }

    fn backprop(&self, _: &[f64], x: &[f64], _: &Scratch, g: f64, grad: &mut [f64]) {
        for (gw, xi) in grad[..self.k].iter_mut().zip(x) {
            *gw += g * xi;
        }
        grad[self.k] += g;
    }
}

struct Mlp {
    k: usize,
    h: usize,
}

impl Mlp {
    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.h * self.k;
        let w2 = b1 + self.h;
        let b2 = w2 + self.h;
        (b1, w2, b2)
    }

    fn pre(&self, p: &[f64], x: &[f64], u: usize) -> f64 {
        let (b1, _, _) = self.offsets();
        dot(&p[u * self.k..(u + 1) * self.k], x) + p[b1 + u]
    }
}

impl Network for Mlp {
    fn n_params(&self) -> usize {
        self.h * self.k + 2 * self.h + 1
    }

    fn pooled(&self) -> bool {
        true
    }

    fn fan_in(&self, param: usize) -> usize {
        let (b1, w2, b2) = self.offsets();
        if param < b1 {
            self.k
        } else if (w2..b2).contains(&param) {
            self.h
        } else {
            0
        }
    }

    fn logit(&self, p: &[f64], x: &[f64], s: &mut Scratch) -> f64 {
        let (_, w2, b2) = self.offsets();
        s.hidden.clear();
        for u in 0..self.h {
            s.hidden.push(self.pre(p, x, u).max(0.0));
        }
        dot(&p[w2..b2], &s.hidden) + p[b2]
    }

    fn backprop(&self, p: &[f64], x: &[f64], s: &Scratch, g: f64, grad: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for u in 0..self.h {
            let a = s.hidden[u];
            grad[w2 + u] += g * a;
            if a > 0.0 {
                let gu = g * p[w2 + u];
                for (gw, xi) in grad[u * self.k..(u + 1) * self.k].iter_mut().zip(x) {
                    *gw += gu * xi;
                }
                grad[b1 + u] += gu;
            }
        }
        grad[b2] += g;
    }

    fn near_kink(&self, p: &[f64], x: &[f64], margin: f64) -> bool {
        (0..self.h).any(|u| self.pre(p, x, u).abs() < margin)
    }
}

struct Cnn1d {
    k: usize,
    frames: usize,
    channels: usize,
    kernel: usize,
}

impl Cnn1d {
    fn span(&self) -> usize {
        self.kernel * self.k
    }

    fn positions(&self) -> usize {
        self.frames - self.kernel + 1
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let conv_b = self.channels * self.span();
        let dense = conv_b + self.channels;
        let dense_b = dense + self.channels;
        (conv_b, dense, dense_b)
    }

    /// Pre-activation of channel `c` at output position `t`.
    fn conv(&self, p: &[f64], x: &[f64], c: usize, t: usize) -> f64 {
        let span = self.span();
        let (conv_b, _, _) = self.offsets();
        // rows t..t+kernel of a row-major window are one contiguous slice
        dot(
            &p[c * span..(c + 1) * span],
            &x[t * self.k..t * self.k + span],
        ) + p[conv_b + c]
    }
}

impl Network for Cnn1d {
    fn n_params(&self) -> usize {
        self.channels * self.span() + 2 * self.channels + 1
    }

    fn pooled(&self) -> bool {
        false
    }

    fn fan_in(&self, param: usize) -> usize {
        let (conv_b, dense, dense_b) = self.offsets();
        if param < conv_b {
            self.span()
        } else if (dense..dense_b).contains(&param) {
            self.channels
        } else {
            0
        }
    }

    fn logit(&self, p: &[f64], x: &[f64], s: &mut Scratch) -> f64 {
        let (_, dense, dense_b) = self.offsets();
        s.hidden.clear();
        s.argmax.clear();
        for c in 0..self.channels {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for t in 0..self.positions() {
                let z = self.conv(p, x, c, t);
                if z > best {
                    best = z;
                    arg = t;
                }
            }
            // max over t of relu(z) == relu(max over t of z)
            s.hidden.push(best.max(0.0));
            s.argmax.push(arg);
        }
        dot(&p[dense..dense_b], &s.hidden) + p[dense_b]
    }

    fn backprop(&self, p: &[f64], x: &[f64], s: &Scratch, g: f64, grad: &mut [f64]) {
        let (conv_b, dense, dense_b) = self.offsets();
        let span = self.span();
        for c in 0..self.channels {
            let a = s.hidden[c];
            grad[dense + c] += g * a;
            if a > 0.0 {
                let gc = g * p[dense + c];
                let t = s.argmax[c];
                let xs = &x[t * self.k..t * self.k + span];
                for (gw, xi) in grad[c * span..(c + 1) * span].iter_mut().zip(xs) {
                    *gw += gc * xi;
                }
                grad[conv_b + c] += gc;
            }
        }
        grad[dense_b] += g;
    }

    fn near_kink(&self, p: &[f64], x: &[f64], margin: f64) -> bool {
        for c in 0..self.channels {
            let mut z: Vec<f64> = (0..self.positions())
                .map(|t| self.conv(p, x, c, t))
                .collect();
            z.sort_by(|a, b| b.total_cmp(a));
            if z[0].abs() < margin {
                return true;
            }
            if z[0] > 0.0 && z.len() > 1 && z[0] - z[1] < margin {
                return true;
            }
        }
        false
    }
}

fn build_network(spec: &ClassifierSpec, frames: usize, k: usize) -> Box<dyn Network> {
    let hp = &spec.hyperparams;
    match spec.kind {
        ClassifierKind::Logistic => Box::new(Logistic { k }),
        ClassifierKind::Mlp => Box::new(Mlp {
            k,
            h: hp.hidden_units,
        }),
        ClassifierKind::Cnn1d => Box::new(Cnn1d {
            k,
            frames,
            channels: hp.conv_channels,
            kernel: hp.kernel_width,
        }),
    }
}

// ---------------------------------------------------------------------------
// Loss

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample weighted BCE on a logit and its derivative with respect to the logit.
fn sample_loss(z: f64, y: u8, pos_weight: f64) -> (f64, f64) {
    if y == 1 {
        // -w log sigmoid(z)
        (pos_weight * softplus(-z), pos_weight * (sigmoid(z) - 1.0))
    } else {
        // -log(1 - sigmoid(z))
        (softplus(z), sigmoid(z))
    }
}

/// Mean weighted BCE plus `lambda * ||params||^2`, and its gradient.
#[allow(clippy::too_many_arguments)]
fn batch_loss_grad(
    net: &dyn Network,
    params: &[f64],
    inputs: &[&[f64]],
    labels: &[u8],
    pos_weight: f64,
    lambda: f64,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    grad.fill(0.0);
    let inv = 1.0 / inputs.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let z = net.logit(params, x, scratch);
        let (l, dz) = sample_loss(z, y, pos_weight);
        loss += l;
        net.backprop(params, x, scratch, dz * inv, grad);
    }
    let mut penalty = 0.0;
    for (g, p) in grad.iter_mut().zip(params) {
        penalty += p * p;
        *g += 2.0 * lambda * p;
    }
    loss * inv + lambda * penalty
}

fn batch_loss(
    net: &dyn Network,
    params: &[f64],
    inputs: &[&[f64]],
    labels: &[u8],
    pos_weight: f64,
    lambda: f64,
    scratch: &mut Scratch,
) -> f64 {
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        loss += sample_loss(net.logit(params, x, scratch), y, pos_weight).0;
    }
    let penalty: f64 = params.iter().map(|p| p * p).sum();
    loss / inputs.len() as f64 + lambda * penalty
}

/// Mean weighted BCE (no penalty) of fixed logits; exposed for loss checks.
pub fn weighted_bce(logits: &[f64], labels: &[u8], pos_weight: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| sample_loss(z, y, pos_weight).0)
        .sum();
    total / logits.len() as f64
}

// ---------------------------------------------------------------------------
// Standardisation

/// Per-feature training-set mean and standard deviation (floored at [`STD_FLOOR`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<S: FrameSource>(windows: &[S]) -> Self {
        let k = windows[0].n_features();
        let mut count = 0usize;
        let mut mean = vec![0.0; k];
        for w in windows {
            for t in 0..w.n_frames() {
                for (j, m) in mean.iter_mut().enumerate() {
                    *m += w.value(t, j);
                }
            }
            count += w.n_frames();
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }
        let mut var = vec![0.0; k];
        for w in windows {
            for t in 0..w.n_frames() {
                for (j, v) in var.iter_mut().enumerate() {
                    let d = w.value(t, j) - mean[j];
                    *v += d * d;
                }
            }
        }
        let std = var
            .iter()
            .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, j: usize, v: f64) -> f64 {
        if self.std[j] <= STD_FLOOR {
            0.0
        } else {
            (v - self.mean[j]) / self.std[j]
        }
    }

    fn pooled<S: FrameSource>(&self, w: &S, out: &mut Vec<f64>) {
        let k = w.n_features();
        out.clear();
        out.resize(k, 0.0);
        for t in 0..w.n_frames() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += w.value(t, j);
            }
        }
        let n = w.n_frames() as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.apply(j, *o / n);
        }
    }

    fn full<S: FrameSource>(&self, w: &S, out: &mut Vec<f64>) {
        let k = w.n_features();
        out.clear();
        for t in 0..w.n_frames() {
            for j in 0..k {
                out.push(self.apply(j, w.value(t, j)));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub n_frames: usize,
    pub n_features: usize,
    pub standardizer: Standardizer,
    pub parameters: Vec<f64>,
    /// (epoch, mean mini-batch loss)
    pub training_log: Vec<(usize, f64)>,
    pub positive_class_weight: f64,
    /// All training labels were identical.
    pub single_class: bool,
}

fn check_shapes<S: FrameSource>(windows: &[S]) -> Result<(usize, usize), ModelError> {
    let first = windows.first().ok_or(ModelError::EmptyTrainingSet)?;
    let shape = (first.n_frames(), first.n_features());
    for w in windows {
        if (w.n_frames(), w.n_features()) != shape {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{}x{}", shape.0, shape.1),
                found: format!("{}x{}", w.n_frames(), w.n_features()),
            });
        }
    }
    Ok(shape)
}

/// n_neg / n_pos, or 1 when a class is absent.
pub fn balanced_positive_weight(labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// Trains one classifier. Deterministic given `(spec, windows, labels)`.
pub fn fit<S: FrameSource>(
    spec: &ClassifierSpec,
    windows: &[S],
    labels: &[u8],
) -> Result<TrainedClassifier, ModelError> {
    let (frames, k) = check_shapes(windows)?;
    if labels.len() != windows.len() {
        return Err(ModelError::ShapeMismatch {
            expected: format!("{} labels", windows.len()),
            found: format!("{} labels", labels.len()),
        });
    }
    spec.validate(frames)?;
    let hp = &spec.hyperparams;
    let net = build_network(spec, frames, k);
    let standardizer = Standardizer::fit(windows);
    let pos_weight = hp
        .positive_class_weight
        .unwrap_or_else(|| balanced_positive_weight(labels));
    let single_class = labels.iter().all(|&l| l == labels[0]);

    let mut rng = seed::rng(spec.seed);
    let mut params = net.init(&mut rng);
    let mut velocity = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut scratch = Scratch::default();

    // Pooled inputs are small enough to precompute; full windows are
    // standardised batch by batch.
    let pooled: Vec<Vec<f64>> = if net.pooled() {
        windows
            .iter()
            .map(|w| {
                let mut v = Vec::new();
                standardizer.pooled(w, &mut v);
                v
            })
            .collect()
    } else {
        Vec::new()
    };
    let bs = hp.batch_size.min(windows.len());
    let mut buffers: Vec<Vec<f64>> = vec![Vec::new(); bs];
    let mut batch_labels = Vec::with_capacity(bs);

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            batch_labels.clear();
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let inputs: Vec<&[f64]> = if net.pooled() {
                chunk.iter().map(|&i| pooled[i].as_slice()).collect()
            } else {
                for (buf, &i) in buffers.iter_mut().zip(chunk) {
                    standardizer.full(&windows[i], buf);
                }
                buffers[..chunk.len()].iter().map(Vec::as_slice).collect()
            };
            let loss = batch_loss_grad(
                net.as_ref(),
                &params,
                &inputs,
                &batch_labels,
                pos_weight,
                hp.l2_lambda,
                &mut grad,
                &mut scratch,
            );
            if !loss.is_finite() {
                return Err(ModelError::DivergedLoss { epoch });
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFiniteGradient);
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = hp.momentum * *v - hp.learning_rate * g;
                *p += *v;
            }
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::DivergedLoss { epoch });
        }
        log.push((epoch, mean));
    }

    Ok(TrainedClassifier {
        spec: spec.clone(),
        n_frames: frames,
        n_features: k,
        standardizer,
        parameters: params,
        training_log: log,
        positive_class_weight: pos_weight,
        single_class,
    })
}

impl TrainedClassifier {
    /// A model with explicit parameters and identity standardisation.
    pub fn from_parameters(
        spec: ClassifierSpec,
        n_frames: usize,
        n_features: usize,
        parameters: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let net = build_network(&spec, n_frames, n_features);
        if parameters.len() != net.n_params() {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{} parameters", net.n_params()),
                found: format!("{} parameters", parameters.len()),
            });
        }
        Ok(TrainedClassifier {
            spec,
            n_frames,
            n_features,
            standardizer: Standardizer {
                mean: vec![0.0; n_features],
                std: vec![1.0; n_features],
            },
            parameters,
            training_log: Vec::new(),
            positive_class_weight: 1.0,
            single_class: false,
        })
    }

    pub fn predict_proba<S: FrameSource>(&self, window: &S) -> Result<f64, ModelError> {
        if (window.n_frames(), window.n_features()) != (self.n_frames, self.n_features) {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{}x{}", self.n_frames, self.n_features),
                found: format!("{}x{}", window.n_frames(), window.n_features()),
            });
        }
        let net = build_network(&self.spec, self.n_frames, self.n_features);
        let mut x = Vec::new();
        if net.pooled() {
            self.standardizer.pooled(window, &mut x);
        } else {
            self.standardizer.full(window, &mut x);
        }
        let z = net.logit(&self.parameters, &x, &mut Scratch::default());
        Ok(sigmoid(z))
    }

    /// Serialises to the versioned text checkpoint format.
    pub fn to_checkpoint(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        out.push_str(&format!("kind = {}\n", self.spec.kind));
        out.push_str(&format!("seed = {}\n", self.spec.seed));
        for (k, v) in self.spec.hyperparam_map() {
            out.push_str(&format!("hp.{k} = {v}\n"));
        }
        out.push_str(&format!("n_frames = {}\n", self.n_frames));
        out.push_str(&format!("n_features = {}\n", self.n_features));
        out.push_str(&format!(
            "positive_class_weight = {}\n",
            self.positive_class_weight
        ));
        out.push_str(&format!("single_class = {}\n", self.single_class));
        out.push_str(&format!("mean = {}\n", join(&self.standardizer.mean)));
        out.push_str(&format!("std = {}\n", join(&self.standardizer.std)));
        out.push_str(&format!("parameters = {}\n", join(&self.parameters)));
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .ok_or_else(|| bad("missing checkpoint header"))?
            .trim();
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(ModelError::CheckpointVersion {
                found: version.to_string(),
            });
        }
        let mut fields = BTreeMap::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| bad(&format!("missing field {k}")))
        };
        let num = |k: &str| -> Result<f64, ModelError> {
            get(k)?
                .parse()
                .map_err(|_| bad(&format!("bad number in {k}")))
        };
        let vec = |k: &str| -> Result<Vec<f64>, ModelError> {
            get(k)?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(&format!("bad number in {k}"))))
                .collect()
        };

        let kind: ClassifierKind = get("kind")?.parse()?;
        let seed: u64 = get("seed")?.parse().map_err(|_| bad("bad seed"))?;
        let mut spec = ClassifierSpec::new(kind, seed);
        spec.hyperparams.positive_class_weight = None;
        for (k, v) in &fields {
            if let Some(name) = k.strip_prefix("hp.") {
                let v: f64 = v.parse().map_err(|_| bad(&format!("bad number in {k}")))?;
                spec.set(name, v)?;
            }
        }
        let n_frames = num("n_frames")? as usize;
        let n_features = num("n_features")? as usize;
        let mut model =
            TrainedClassifier::from_parameters(spec, n_frames, n_features, vec("parameters")?)?;
        let mean = vec("mean")?;
        let std = vec("std")?;
        if mean.len() != n_features || std.len() != n_features {
            return Err(bad("standardisation vectors do not match n_features"));
        }
        model.standardizer = Standardizer { mean, std };
        model.positive_class_weight = num("positive_class_weight")?;
        model.single_class = get("single_class")? == "true";
        Ok(model)
    }
}

// ---------------------------------------------------------------------------
// Gradient check

/// Largest relative error between the analytic gradient and central finite
/// differences, at freshly initialised parameters (seeded by `spec.seed`) on
/// the raw (unstandardised) batch. Fails with [`ModelError::KinkNearby`] when
/// a ReLU or max-pool switch lies within reach of the perturbation; callers
/// redraw the batch.
pub fn grad_check<S: FrameSource>(
    spec: &ClassifierSpec,
    batch: &[S],
    labels: &[u8],
) -> Result<f64, ModelError> {
    let (frames, k) = check_shapes(batch)?;
    spec.validate(frames)?;
    let net = build_network(spec, frames, k);
    let mut rng = seed::rng_for(spec.seed, "grad-check");
    let params = net.init(&mut rng);
    grad_check_at(net.as_ref(), &params, spec, batch, labels)
}

fn grad_check_at<S: FrameSource>(
    net: &dyn Network,
    params: &[f64],
    spec: &ClassifierSpec,
    batch: &[S],
    labels: &[u8],
) -> Result<f64, ModelError> {
    let identity = Standardizer {
        mean: vec![0.0; batch[0].n_features()],
        std: vec![1.0; batch[0].n_features()],
    };
    let inputs: Vec<Vec<f64>> = batch
        .iter()
        .map(|w| {
            let mut v = Vec::new();
            if net.pooled() {
                identity.pooled(w, &mut v);
            } else {
                identity.full(w, &mut v);
            }
            v
        })
        .collect();
    if inputs.iter().any(|x| net.near_kink(params, x, KINK_MARGIN)) {
        return Err(ModelError::KinkNearby);
    }
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let pos_weight = spec
        .hyperparams
        .positive_class_weight
        .unwrap_or_else(|| balanced_positive_weight(labels));
    let lambda = spec.hyperparams.l2_lambda;

    let mut scratch = Scratch::default();
    let mut analytic = vec![0.0; params.len()];
    batch_loss_grad(
        net,
        params,
        &refs,
        labels,
        pos_weight,
        lambda,
        &mut analytic,
        &mut scratch,
    );
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(ModelError::NonFiniteGradient);
    }

    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + GRAD_CHECK_EPS;
        let up = batch_loss(net, &theta, &refs, labels, pos_weight, lambda, &mut scratch);
        theta[i] = orig - GRAD_CHECK_EPS;
        let down = batch_loss(net, &theta, &refs, labels, pos_weight, lambda, &mut scratch);
        theta[i] = orig;
        let numeric = (up - down) / (2.0 * GRAD_CHECK_EPS);
        if !numeric.is_finite() {
            return Err(ModelError::NonFiniteGradient);
        }
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Draws a random batch from `seed`: `n` windows of `frames x features`
/// standard-normal values with alternating labels.
pub fn random_batch(
    seed_value: u64,
    n: usize,
    frames: usize,
    features: usize,
) -> (Vec<crate::data::FeatureMatrix>, Vec<u8>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seed::rng_for(seed_value, "random-batch");
    let batch = (0..n)
        .map(|_| {
            let data = (0..frames * features)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            crate::data::FeatureMatrix::new(frames, features, data)
        })
        .collect();
    let labels = (0..n).map(|i| (i % 2) as u8).collect();
    (batch, labels)
}
