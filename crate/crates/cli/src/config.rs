//! Run configuration: a TOML file with one table per pipeline stage.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use painfusion::data::{Manifest, SyntheticConfig, WindowParams};
use painfusion::eval::{ExperimentConfig, Granularity};
use painfusion::modality::JointSegmentMap;
use painfusion::stats::FeatureSummary;
use painfusion::{ClassifierKind, ClassifierSpec, Error, ModalityScheme, VoteMode, Weighting};
use serde::Deserialize;

type Result<T> = std::result::Result<T, Error>;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<DataSection>,
    synthetic: Option<toml::Table>,
    window: Option<WindowParams>,
    #[serde(default)]
    modality: ModalitySection,
    #[serde(default)]
    classifier: ClassifierSection,
    #[serde(default)]
    hyperparams: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    fusion: FusionSection,
    #[serde(default)]
    matrix: MatrixSection,
    #[serde(default)]
    loocv: LoocvSection,
    #[serde(default)]
    analyze: AnalyzeSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    manifest: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModalitySection {
    scheme: String,
    joint_map: Option<PathBuf>,
}

impl Default for ModalitySection {
    fn default() -> Self {
        ModalitySection {
            scheme: "quadrifurcated".into(),
            joint_map: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ClassifierSection {
    kind: String,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            kind: "cnn1d".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FusionSection {
    weighting: String,
    threshold: f64,
    vote: String,
    summary: String,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            weighting: "statistical".into(),
            threshold: 0.5,
            vote: "soft".into(),
            summary: "mean".into(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MatrixSection {
    classifiers: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LoocvSection {
    granularity: String,
}

impl Default for LoocvSection {
    fn default() -> Self {
        LoocvSection {
            granularity: "subject".into(),
        }
    }
}

/// Diagnostics settings for `analyze`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    /// Only every `frame_stride`-th frame enters the normality tests, which
    /// keeps serial correlation from inflating the test statistic.
    pub frame_stride: usize,
    pub alpha: f64,
    pub qq_points: usize,
}

type AnalyzeSection = AnalyzeSettings;

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            frame_stride: 10,
            alpha: 0.05,
            qq_points: 200,
        }
    }
}

/// Where recordings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synthetic(SyntheticConfig),
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSource,
    pub window: WindowParams,
    pub scheme: ModalityScheme,
    pub joint_map: JointSegmentMap,
    pub classifier: ClassifierSpec,
    /// Specs for every classifier in a `matrix` run.
    pub matrix_classifiers: Vec<ClassifierSpec>,
    pub weighting: Weighting,
    pub threshold: f64,
    pub vote: VoteMode,
    pub summary: FeatureSummary,
    pub granularity: Granularity,
    pub analyze: AnalyzeSettings,
}

/// Values given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, overrides).map_err(|e| match e {
            Error::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Builds a config from TOML text alone (no file on disk).
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let file: FileConfig =
            toml::from_str(text).map_err(|e| config_err(e.message().to_string()))?;
        Self::resolve(file, base, overrides)
    }

    /// Configuration with every default; only a seed and output directory are needed.
    pub fn defaults(seed: u64, out: PathBuf) -> Result<RunConfig> {
        let overrides = Overrides {
            seed: Some(seed),
            out: Some(out),
        };
        Self::resolve(FileConfig::default(), Path::new(""), &overrides)
    }

    fn resolve(file: FileConfig, base: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let seed = overrides.seed.or(file.seed).ok_or_else(|| {
            config_err("a seed is required (set `seed` in the config or pass --seed)")
        })?;
        let out_dir = match (&overrides.out, &file.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => {
                return Err(config_err(
                    "an output directory is required (set `out` in the config or pass --out)",
                ))
            }
        };

        let data = match (file.data, file.synthetic) {
            (Some(_), Some(_)) => {
                return Err(config_err("set either [data] or [synthetic], not both"));
            }
            (Some(d), None) => {
                let path = base.join(&d.manifest);
                if !path.is_file() {
                    return Err(config_err(format!(
                        "manifest not found: {}",
                        path.display()
                    )));
                }
                DataSource::Manifest(path)
            }
            (None, table) => {
                let table = table.unwrap_or_default();
                let pinned = table.contains_key("seed");
                let mut synth: SyntheticConfig =
                    toml::Value::Table(table)
                        .try_into()
                        .map_err(|e: toml::de::Error| {
                            config_err(format!("[synthetic]: {}", e.message()))
                        })?;
                // The dataset follows the run seed unless pinned separately.
                if !pinned {
                    synth.seed = seed;
                }
                synth.validate()?;
                DataSource::Synthetic(synth)
            }
        };

        let window = file.window.unwrap_or_default();
        window.validate().map_err(|e| config_err(e.to_string()))?;

        let joint_map = match &file.modality.joint_map {
            Some(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| config_err(format!("joint map {}: {e}", path.display())))?;
                JointSegmentMap::parse(&text)?
            }
            None => JointSegmentMap::default(),
        };
        let scheme = ModalityScheme::by_name(&file.modality.scheme, &joint_map)?;

        for kind in file.hyperparams.keys() {
            kind.parse::<ClassifierKind>()
                .map_err(|e| config_err(format!("[hyperparams.{kind}]: {e}")))?;
        }
        let spec_for = |name: &str| -> Result<ClassifierSpec> {
            let kind: ClassifierKind = name
                .parse()
                .map_err(|e: painfusion::models::ModelError| config_err(e.to_string()))?;
            let mut spec = ClassifierSpec::new(kind, seed);
            if let Some(hp) = file.hyperparams.get(kind.as_str()) {
                for (k, v) in hp {
                    spec.set(k, *v)?;
                }
            }
            spec.validate(window.length)?;
            Ok(spec)
        };
        let classifier = spec_for(&file.classifier.kind)?;
        let matrix_classifiers = match &file.matrix.classifiers {
            Some(list) if list.is_empty() => {
                return Err(config_err("[matrix] classifiers must not be empty"));
            }
            Some(list) => list.iter().map(|k| spec_for(k)).collect::<Result<_>>()?,
            None => vec![classifier.clone()],
        };

        let f = &file.fusion;
        let weighting: Weighting = f.weighting.parse().map_err(config_err)?;
        let vote: VoteMode = f.vote.parse().map_err(config_err)?;
        let summary = FeatureSummary::parse(&f.summary).ok_or_else(|| {
            config_err(format!(
                "unknown summary {:?} (expected mean, max or std)",
                f.summary
            ))
        })?;
        if !(f.threshold > 0.0 && f.threshold < 1.0) {
            return Err(config_err(format!(
                "threshold must be in (0, 1), got {}",
                f.threshold
            )));
        }
        let granularity: Granularity = file.loocv.granularity.parse().map_err(config_err)?;

        let a = &file.analyze;
        if a.frame_stride == 0 {
            return Err(config_err("[analyze] frame_stride must be positive"));
        }
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return Err(config_err(format!(
                "[analyze] alpha must be in (0, 1), got {}",
                a.alpha
            )));
        }

        Ok(RunConfig {
            seed,
            out_dir,
            data,
            window,
            scheme,
            joint_map,
            classifier,
            matrix_classifiers,
            weighting,
            threshold: f.threshold,
            vote,
            summary,
            granularity,
            analyze: file.analyze,
        })
    }

    /// Experiment settings for the configured scheme and weighting.
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            scheme: self.scheme.clone(),
            weighting: self.weighting,
            classifier: self.classifier.clone(),
            window: self.window,
            threshold: self.threshold,
            vote: self.vote,
            summary: self.summary,
            seed: self.seed,
        }
    }

    /// Manifest of the data source; synthetic data gets its generated manifest.
    pub fn manifest(&self) -> Result<Manifest> {
        match &self.data {
            DataSource::Manifest(p) => Ok(Manifest::load(p)?),
            DataSource::Synthetic(s) => Ok(painfusion::data::synthetic_manifest(s)),
        }
    }
}
