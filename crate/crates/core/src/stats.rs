//! Rank statistics, correlation coefficients, normality diagnostics and the
//! correlation-derived fusion weights.
//!
//! All sums run in index order so results are bit-stable regardless of how
//! callers parallelise over features.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::Window;
use crate::modality::ModalityScheme;
use crate::N_FEATURES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFiniteInput(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("probability {0} outside (0, 1)")]
    OutOfDomain(f64),
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorrelationMethod {
    Spearman,
    Pearson,
    KendallTauB,
}

impl CorrelationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::KendallTauB => "kendall_tau_b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub coefficient: f64,
    pub n: usize,
    pub method: CorrelationMethod,
    /// Either input was constant; `coefficient` is 0 by convention.
    pub degenerate: bool,
}

impl CorrelationResult {
    fn degenerate(n: usize, method: CorrelationMethod) -> Self {
        CorrelationResult {
            coefficient: 0.0,
            n,
            method,
            degenerate: true,
        }
    }
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFiniteInput(i)),
        None => Ok(()),
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    check_finite(x)?;
    check_finite(y)
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|v| *v == values[0])
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn rank_with_ties(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    check_finite(values)?;
    Ok(ranks_unchecked(values))
}

fn ranks_unchecked(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson_unchecked(x: &[f64], y: &[f64], method: CorrelationMethod) -> CorrelationResult {
    let n = x.len();
    if is_constant(x) || is_constant(y) {
        return CorrelationResult::degenerate(n, method);
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return CorrelationResult::degenerate(n, method);
    }
    CorrelationResult {
        coefficient: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        n,
        method,
        degenerate: false,
    }
}

/// Product-moment correlation (two-pass).
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    Ok(pearson_unchecked(x, y, CorrelationMethod::Pearson))
}

/// Spearman's rho as the Pearson correlation of fractional ranks, which stays
/// exact under ties.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    let rx = ranks_unchecked(x);
    let ry = ranks_unchecked(y);
    Ok(pearson_unchecked(&rx, &ry, CorrelationMethod::Spearman))
}

/// Pairs sharing a value in runs of equal keys: sum of k(k-1)/2 per run.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

fn tau_b_from_counts(concordant_minus_discordant: i64, n0: i64, n1: i64, n2: i64) -> f64 {
    concordant_minus_discordant as f64 / ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt()
}

/// Tie-corrected Kendall tau-b in O(n log n) (merge-sort inversion counting).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    let n = x.len();
    let method = CorrelationMethod::KendallTauB;
    if is_constant(x) || is_constant(y) {
        return Ok(CorrelationResult::degenerate(n, method));
    }
    // -0.0 and 0.0 must sort together for the run-based tie counts
    let x: Vec<f64> = x.iter().map(|v| v + 0.0).collect();
    let y: Vec<f64> = y.iter().map(|v| v + 0.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match x[a].total_cmp(&x[b]) {
        Ordering::Equal => y[a].total_cmp(&y[b]),
        o => o,
    });
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let xys: Vec<(f64, f64)> = order.iter().map(|&i| (x[i], y[i])).collect();
    let n0 = (n as i64) * (n as i64 - 1) / 2;
    let n1 = tied_pairs(&xs);
    let n3 = tied_pairs(&xys);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);

    let numerator = n0 - n1 - n2 + n3 - 2 * discordant;
    Ok(CorrelationResult {
        coefficient: tau_b_from_counts(numerator, n0, n1, n2).clamp(-1.0, 1.0),
        n,
        method,
        degenerate: false,
    })
}

/// Inverse standard-normal CDF (Wichura's AS 241, about 16 significant digits).
pub fn normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::OutOfDomain(p));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2_509.080_928_730_122_7 + 33_430.575_583_588_13) * r
            + 67_265.770_927_008_7)
            * r
            + 45_921.953_931_549_87)
            * r
            + 13_731.693_765_509_46)
            * r
            + 1_971.590_950_306_551_4)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5;
        let den = ((((((r * 5_226.495_278_852_545 + 28_729.085_735_721_943) * r
            + 39_307.895_800_092_71)
            * r
            + 21_213.794_301_586_597)
            * r
            + 5_394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return Ok(q * num / den);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Moment-based normality summary with Jarque-Bera test and Q-Q pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera_stat: f64,
    pub jarque_bera_p: f64,
    /// (theoretical, sample) quantiles, ascending.
    pub qq_pairs: Vec<(f64, f64)>,
}

impl NormalityReport {
    /// Normality rejected at significance level `alpha`.
    pub fn rejects_normality(&self, alpha: f64) -> bool {
        self.jarque_bera_p < alpha
    }

    /// At most `max_points` Q-Q pairs, evenly spaced, always keeping both ends.
    pub fn thinned_qq(&self, max_points: usize) -> Vec<(f64, f64)> {
        let n = self.qq_pairs.len();
        if n <= max_points || max_points < 2 {
            return self.qq_pairs.clone();
        }
        (0..max_points)
            .map(|k| self.qq_pairs[k * (n - 1) / (max_points - 1)])
            .collect()
    }

    pub fn to_text(&self) -> String {
        format!(
            "n = {}\nmean = {}\nstd = {}\nskewness = {}\nexcess_kurtosis = {}\njarque_bera_stat = {}\njarque_bera_p = {}\n",
            self.n,
            self.mean,
            self.std,
            self.skewness,
            self.excess_kurtosis,
            self.jarque_bera_stat,
            self.jarque_bera_p
        )
    }
}

pub fn qq_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("theoretical_quantile,sample_quantile\n");
    for (t, s) in pairs {
        out.push_str(&format!("{t},{s}\n"));
    }
    out
}

pub fn normality_report(values: &[f64]) -> Result<NormalityReport, StatsError> {
    let n = values.len();
    if n < 8 {
        return Err(StatsError::TooFewSamples { needed: 8, got: n });
    }
    check_finite(values)?;
    if is_constant(values) {
        return Err(StatsError::ZeroVariance);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let jb = nf * (skewness * skewness / 6.0 + excess_kurtosis * excess_kurtosis / 24.0);
    // chi-square with 2 degrees of freedom: upper tail is exp(-x/2)
    let p = (-jb / 2.0).exp();
    let std = (m2 * nf / (nf - 1.0)).sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let qq_pairs = sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let prob = (i as f64 + 0.5) / nf;
            let z = normal_quantile(prob).expect("plotting position is inside (0, 1)");
            (mean + std * z, s)
        })
        .collect();

    Ok(NormalityReport {
        n,
        mean,
        std,
        skewness,
        excess_kurtosis,
        jarque_bera_stat: jb,
        jarque_bera_p: p.clamp(0.0, 1.0),
        qq_pairs,
    })
}

// ---------------------------------------------------------------------------
// Fusion weights

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Statistical,
    Average,
    Singular,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Statistical => "statistical",
            Provenance::Average => "average",
            Provenance::Singular => "singular",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normalised per-modality voting weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub scheme_name: String,
    pub weights: BTreeMap<String, f64>,
    pub provenance: Provenance,
    /// Pre-normalisation mean |rho| per modality (zero for average weights).
    pub raw_relevance: BTreeMap<String, f64>,
}

impl FusionWeights {
    pub fn get(&self, modality: &str) -> Option<f64> {
        self.weights.get(modality).copied()
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scheme = {}\nprovenance = {}\n",
            self.scheme_name, self.provenance
        );
        for (m, r) in &self.raw_relevance {
            out.push_str(&format!("raw_relevance.{m} = {r}\n"));
        }
        for (m, w) in &self.weights {
            out.push_str(&format!("weight.{m} = {w}\n"));
        }
        out
    }
}

/// Per-window temporal reduction used before correlating a feature with the label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSummary {
    #[default]
    Mean,
    Max,
    Std,
}

impl FeatureSummary {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSummary::Mean => "mean",
            FeatureSummary::Max => "max",
            FeatureSummary::Std => "std",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(FeatureSummary::Mean),
            "max" => Some(FeatureSummary::Max),
            "std" => Some(FeatureSummary::Std),
            _ => None,
        }
    }

    fn reduce(self, window: &Window, feature: usize) -> f64 {
        let len = window.len() as f64;
        let vals = (0..window.len()).map(|t| window.frame(t).features[feature]);
        match self {
            FeatureSummary::Mean => vals.sum::<f64>() / len,
            FeatureSummary::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            FeatureSummary::Std => {
                let mean = (0..window.len())
                    .map(|t| window.frame(t).features[feature])
                    .sum::<f64>()
                    / len;
                let ss: f64 = vals.map(|v| (v - mean) * (v - mean)).sum();
                (ss / len).sqrt()
            }
        }
    }
}

/// Normalises raw relevances into weights. All-zero relevance falls back to
/// equal weights with `Average` provenance; a one-modality scheme is `Singular`.
pub fn weights_from_relevance(
    scheme_name: &str,
    raw_relevance: BTreeMap<String, f64>,
) -> FusionWeights {
    let m = raw_relevance.len();
    let total: f64 = raw_relevance.values().sum();
    let (weights, provenance) = if total > 0.0 {
        let w = raw_relevance
            .iter()
            .map(|(k, r)| (k.clone(), r / total))
            .collect();
        (w, Provenance::Statistical)
    } else {
        let w = raw_relevance
            .keys()
            .map(|k| (k.clone(), 1.0 / m as f64))
            .collect();
        (w, Provenance::Average)
    };
    FusionWeights {
        scheme_name: scheme_name.to_string(),
        weights,
        provenance: if m == 1 {
            Provenance::Singular
        } else {
            provenance
        },
        raw_relevance,
    }
}

/// Spearman rho of every feature's per-window summary against the window label.
pub fn feature_label_correlations(
    windows: &[Window],
    labels: &[u8],
    summary: FeatureSummary,
) -> Result<Vec<CorrelationResult>, StatsError> {
    if windows.is_empty() {
        return Err(StatsError::EmptyDataset);
    }
    if windows.len() != labels.len() {
        return Err(StatsError::LengthMismatch(windows.len(), labels.len()));
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    (0..N_FEATURES)
        .into_par_iter()
        .map(|j| {
            let x: Vec<f64> = windows.iter().map(|w| summary.reduce(w, j)).collect();
            spearman_rho(&x, &y)
        })
        .collect()
}

/// Fusion weights from mean |rho| per modality, using time-mean window summaries.
pub fn modality_weights(
    windows: &[Window],
    labels: &[u8],
    scheme: &ModalityScheme,
) -> Result<FusionWeights, StatsError> {
    modality_weights_with(windows, labels, scheme, FeatureSummary::Mean)
}

pub fn modality_weights_with(
    windows: &[Window],
    labels: &[u8],
    scheme: &ModalityScheme,
    summary: FeatureSummary,
) -> Result<FusionWeights, StatsError> {
    let rho = feature_label_correlations(windows, labels, summary)?;
    let raw = scheme
        .modalities()
        .iter()
        .map(|(name, idx)| {
            let sum: f64 = idx
                .iter()
                .map(|&j| {
                    if rho[j].degenerate {
                        0.0
                    } else {
                        rho[j].coefficient.abs()
                    }
                })
                .sum();
            (name.clone(), sum / idx.len() as f64)
        })
        .collect();
    Ok(weights_from_relevance(scheme.name(), raw))
}

/// Equal weights, one per modality.
pub fn average_weights(scheme: &ModalityScheme) -> FusionWeights {
    let m = scheme.len() as f64;
    FusionWeights {
        scheme_name: scheme.name().to_string(),
        weights: scheme.names().map(|k| (k.to_string(), 1.0 / m)).collect(),
        provenance: if scheme.len() == 1 {
            Provenance::Singular
        } else {
            Provenance::Average
        },
        raw_relevance: scheme.names().map(|k| (k.to_string(), 0.0)).collect(),
    }
}
