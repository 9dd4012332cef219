//! The six subcommands. Each writes only under `RunConfig::out_dir` and
//! returns the paths it wrote, relative to that directory.

use std::path::{Path, PathBuf};

use painfusion::data::{generate_synthetic, split_train_valid, windows_for, SequenceData, Window};
use painfusion::eval::{loocv, run_matrix, run_on_sequences};
use painfusion::fusion::predictions_csv;
use painfusion::report::{folds_csv, folds_table, report_text, reports_csv, reports_table};
use painfusion::stats::{
    average_weights, modality_weights_with, normality_report, qq_csv, NormalityReport, StatsError,
};
use painfusion::{Error, FusionWeights, Weighting, N_COORDS, N_FEATURES, N_JOINTS};

use crate::config::{DataSource, RunConfig};

type Result<T> = std::result::Result<T, Error>;

/// Collects output files under one directory.
pub struct Output {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(root: &Path) -> Result<Output> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Output {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(PathBuf::from(rel));
        Ok(())
    }

    pub fn written(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Every sequence in manifest order.
pub fn load_all(config: &RunConfig) -> Result<Vec<SequenceData>> {
    match &config.data {
        DataSource::Manifest(_) => Ok(config.manifest()?.load_sequences()?),
        DataSource::Synthetic(s) => Ok(generate_synthetic(s)?),
    }
}

/// Train and validation sequences per the manifest's split column.
pub fn load_split(config: &RunConfig) -> Result<(Vec<SequenceData>, Vec<SequenceData>)> {
    let manifest = config.manifest()?;
    let seqs = load_all(config)?;
    Ok(split_train_valid(&seqs, &manifest.assignment())?)
}

/// Human-readable name of feature column `j`.
pub fn feature_name(j: usize) -> String {
    if j < N_COORDS {
        let axis = ["x", "y", "z"][j / N_JOINTS];
        format!("{axis}{:02}", j % N_JOINTS)
    } else {
        format!("semg{}", j - N_COORDS)
    }
}

// ---------------------------------------------------------------------------
// analyze

fn thinned_column(seqs: &[SequenceData], j: usize, stride: usize) -> Vec<f64> {
    seqs.iter()
        .flat_map(|s| {
            s.frames()
                .iter()
                .step_by(stride)
                .map(move |f| f.features[j])
        })
        .collect()
}

/// Recommendation text derived from the per-feature tests.
pub fn recommendation(rejected: usize, tested: usize, alpha: f64) -> String {
    let mut out = format!(
        "normality_rejected = {rejected} of {tested} features (Jarque-Bera, alpha {alpha}, Bonferroni-adjusted)\n"
    );
    if rejected > 0 {
        out.push_str("method = spearman\n");
        out.push_str(
            "recommendation: opt for Spearman rank correlation; normality is rejected, so Pearson's r and ANOVA are not appropriate\n",
        );
    } else {
        out.push_str("method = pearson\n");
        out.push_str(
            "recommendation: normality not rejected for any feature; Pearson's r is admissible and Spearman remains valid\n",
        );
    }
    out.push_str(
        "note: Kendall's tau-b is exact under ties but its direct form is quadratic in n; it serves as a small-sample check\n",
    );
    out
}

pub fn cmd_analyze(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let seqs = load_all(config)?;
    let settings = &config.analyze;
    let mut out = Output::new(&config.out_dir)?;

    let columns: Vec<Vec<f64>> = (0..N_FEATURES)
        .map(|j| thinned_column(&seqs, j, settings.frame_stride))
        .collect();
    let reports: Vec<std::result::Result<NormalityReport, StatsError>> =
        columns.iter().map(|c| normality_report(c)).collect();

    let mut summary = String::from(
        "feature,name,n,mean,std,skewness,excess_kurtosis,jarque_bera_stat,jarque_bera_p,status\n",
    );
    let tested = reports.iter().filter(|r| r.is_ok()).count();
    let adjusted = settings.alpha / tested.max(1) as f64;
    let mut rejected = 0;
    let mut pooled = Vec::new();
    for (j, r) in reports.iter().enumerate() {
        let name = feature_name(j);
        match r {
            Ok(r) => {
                let rejects = r.rejects_normality(adjusted);
                rejected += usize::from(rejects);
                summary.push_str(&format!(
                    "{j},{name},{},{},{},{},{},{},{},{}\n",
                    r.n,
                    r.mean,
                    r.std,
                    r.skewness,
                    r.excess_kurtosis,
                    r.jarque_bera_stat,
                    r.jarque_bera_p,
                    if rejects { "non_normal" } else { "normal" }
                ));
                out.write(
                    &format!("normality/feature_{j:02}.txt"),
                    &format!("feature = {name}\n{}", r.to_text()),
                )?;
                out.write(
                    &format!("qq/feature_{j:02}.csv"),
                    &qq_csv(&r.thinned_qq(settings.qq_points)),
                )?;
                pooled.extend(columns[j].iter().map(|v| (v - r.mean) / r.std));
            }
            Err(StatsError::ZeroVariance) => {
                summary.push_str(&format!("{j},{name},{},,,,,,,constant\n", columns[j].len()));
            }
            Err(e) => return Err(Error::Stats(e.clone())),
        }
    }
    out.write("normality.csv", &summary)?;
    if !pooled.is_empty() {
        let r = normality_report(&pooled)?;
        out.write(
            "normality/pooled.txt",
            &format!("feature = pooled_standardized\n{}", r.to_text()),
        )?;
        out.write("qq/pooled.csv", &qq_csv(&r.thinned_qq(settings.qq_points)))?;
    }
    let rec = recommendation(rejected, tested, settings.alpha);
    out.write("recommendation.txt", &rec)?;
    print!("{rec}");
    Ok(out.written())
}

// ---------------------------------------------------------------------------
// weights

fn labelled(windows: &[Window]) -> Vec<u8> {
    windows.iter().map(|w| w.label).collect()
}

/// Weights from the training split only.
pub fn derive_weights(config: &RunConfig, train: &[SequenceData]) -> Result<FusionWeights> {
    match config.weighting {
        Weighting::Statistical => {
            let windows = windows_for(train, &config.window)?;
            Ok(modality_weights_with(
                &windows,
                &labelled(&windows),
                &config.scheme,
                config.summary,
            )?)
        }
        Weighting::Average => Ok(average_weights(&config.scheme)),
    }
}

pub fn cmd_weights(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let (train, _) = load_split(config)?;
    let w = derive_weights(config, &train)?;
    let mut out = Output::new(&config.out_dir)?;
    out.write("weights.txt", &w.to_text())?;
    print!("{}", w.to_text());
    Ok(out.written())
}

// ---------------------------------------------------------------------------
// synth

pub fn cmd_synth(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let DataSource::Synthetic(synth) = &config.data else {
        return Err(Error::Config(
            "synth needs a [synthetic] section, not [data]".into(),
        ));
    };
    let seqs = generate_synthetic(synth)?;
    let manifest = painfusion::data::synthetic_manifest(synth);
    let mut out = Output::new(&config.out_dir)?;
    for (seq, rec) in seqs.iter().zip(&manifest.records) {
        out.write(&rec.path.to_string_lossy(), &seq.to_rows())?;
    }
    out.write("manifest.csv", &manifest.to_csv())?;
    let settings = toml::to_string(synth).map_err(|e| Error::Config(e.to_string()))?;
    out.write("synthetic.toml", &settings)?;
    let frames: usize = seqs.iter().map(SequenceData::len).sum();
    let positives: usize = seqs
        .iter()
        .map(|s| s.frames().iter().filter(|f| f.label == 1).count())
        .sum();
    println!(
        "subjects = {}\nframes = {frames}\npositive_rate = {}",
        seqs.len(),
        positives as f64 / frames as f64
    );
    Ok(out.written())
}

// ---------------------------------------------------------------------------
// evaluate / matrix / loocv

pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let (train, valid) = load_split(config)?;
    let outcome = run_on_sequences(&train, &valid, &config.experiment())?;
    let report = &outcome.report;
    let mut out = Output::new(&config.out_dir)?;
    out.write("report.txt", &report_text(report))?;
    out.write("metrics.csv", &reports_csv(std::slice::from_ref(report)))?;
    out.write("table.txt", &reports_table(std::slice::from_ref(report)))?;
    out.write("weights.txt", &outcome.weights.to_text())?;
    out.write(
        "predictions.csv",
        &predictions_csv(&outcome.predictions, &outcome.subject_ids, &outcome.truth),
    )?;
    for (m, model) in &outcome.models {
        out.write(&format!("checkpoints/{m}.ckpt"), &model.to_checkpoint())?;
    }
    print!("{}", reports_table(std::slice::from_ref(report)));
    Ok(out.written())
}

pub fn cmd_matrix(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let (train, valid) = load_split(config)?;
    let tw = windows_for(&train, &config.window)?;
    let vw = windows_for(&valid, &config.window)?;
    let reports = run_matrix(
        &tw,
        &vw,
        &config.experiment(),
        &config.matrix_classifiers,
        &config.joint_map,
    )?;
    let mut out = Output::new(&config.out_dir)?;
    out.write("matrix.csv", &reports_csv(&reports))?;
    out.write("matrix.txt", &reports_table(&reports))?;
    print!("{}", reports_table(&reports));
    Ok(out.written())
}

pub fn cmd_loocv(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let seqs = load_all(config)?;
    let report = loocv(&seqs, &config.experiment(), config.granularity)?;
    let mut out = Output::new(&config.out_dir)?;
    out.write("loocv_folds.csv", &folds_csv(&report))?;
    out.write("loocv.txt", &folds_table(&report))?;
    out.write("report.txt", &report_text(&report))?;
    print!("{}", folds_table(&report));
    Ok(out.written())
}
