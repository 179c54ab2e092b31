use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::grbm::{BatchSize, TrainConfig};
use crate::pcgrbm::{PcgrbmConfig, SignMode, DEFAULT_EPSILON, DEFAULT_LAMBDA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        name: Option<String>,
    },
    Synth {
        name: String,
        n: usize,
        k: usize,
        p: usize,
        separation: f64,
        seed: u64,
    },
}

impl DatasetSource {
    /// Loads the raw (unnormalized) dataset.
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Csv {
                path,
                label_column,
                name,
            } => {
                let mut d = data::load_csv(path, Some(label_column))?;
                if let Some(name) = name {
                    d.name = name.clone();
                }
                Ok(d)
            }
            DatasetSource::Synth {
                name,
                n,
                k,
                p,
                separation,
                seed,
            } => {
                let mut d = data::synth_blobs(*n, *k, *p, *separation, *seed)?;
                d.name = name.clone();
                Ok(d)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kmeans,
    Spectral,
    Ap,
    CopKmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    Raw,
    Grbm,
    Pcgrbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub method: Method,
    pub features: FeatureSource,
}

impl AlgorithmSpec {
    pub fn new(method: Method, features: FeatureSource) -> Self {
        AlgorithmSpec { method, features }
    }

    /// Column name in reports, e.g. `kmeans-pcgrbm`.
    pub fn name(&self) -> String {
        let m = match self.method {
            Method::Kmeans => "kmeans",
            Method::Spectral => "spectral",
            Method::Ap => "ap",
            Method::CopKmeans => "cop-kmeans",
        };
        let f = match self.features {
            FeatureSource::Raw => "raw",
            FeatureSource::Grbm => "grbm",
            FeatureSource::Pcgrbm => "pcgrbm",
        };
        format!("{m}-{f}")
    }

    /// Whether scores depend on the constraint fraction.
    pub fn uses_constraints(&self) -> bool {
        self.method == Method::CopKmeans || self.features == FeatureSource::Pcgrbm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub lambda: f64,
    pub sign_mode: SignMode,
    pub constraint_rate: f64,
    pub use_sampled_hidden: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epsilon: DEFAULT_EPSILON,
            epochs: 30,
            batch_size: BatchSize::Full,
            lambda: DEFAULT_LAMBDA,
            sign_mode: SignMode::PaperExact,
            constraint_rate: 1.0,
            use_sampled_hidden: true,
        }
    }
}

impl TrainingSection {
    pub fn grbm(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epsilon: self.epsilon,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }

    pub fn pcgrbm(&self, seed: u64) -> PcgrbmConfig {
        PcgrbmConfig {
            base: self.grbm(seed),
            lambda: self.lambda,
            sign_mode: self.sign_mode,
            constraint_rate: self.constraint_rate,
            use_sampled_hidden: self.use_sampled_hidden,
        }
    }
}

fn default_fractions() -> Vec<f64> {
    (1..=8).map(|i| i as f64 / 100.0).collect()
}

fn default_folds() -> usize {
    10
}

fn default_hidden() -> usize {
    100
}

fn default_threads() -> usize {
    1
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("report")
}

/// A whole experiment. The TOML form maps field-for-field onto this struct;
/// see the README for an example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    #[serde(default = "default_hidden")]
    pub hidden_width: usize,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default = "default_fractions")]
    pub constraint_fractions: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Repetition ids; each is mixed with `master_seed` to seed fold
    /// splits, constraint sampling, training and clustering.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<ReportFormat>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    /// Close must-links transitively (and propagate cannot-links across
    /// must-link components) before training and COP-KMeans.
    #[serde(default)]
    pub transitive_closure: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative CSV dataset paths resolve against the file's directory.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            if let DatasetSource::Csv { path, .. } = d {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return fail("no datasets configured".into());
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms configured".into());
        }
        if self.seeds.is_empty() {
            return fail("no seeds configured".into());
        }
        if self.hidden_width == 0 {
            return fail("hidden_width must be >= 1".into());
        }
        if self.folds < 2 {
            return fail(format!("folds must be >= 2, got {}", self.folds));
        }
        if self.threads == 0 {
            return fail("threads must be >= 1".into());
        }
        if self.constraint_fractions.is_empty() {
            return fail("no constraint fractions configured".into());
        }
        if self
            .constraint_fractions
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
            || self.constraint_fractions.windows(2).any(|w| w[1] <= w[0])
        {
            return fail(format!(
                "constraint fractions must be strictly ascending within (0, 1], got {:?}",
                self.constraint_fractions
            ));
        }
        let mut seen = BTreeSet::new();
        for a in &self.algorithms {
            if !seen.insert(a.name()) {
                return fail(format!("algorithm {} listed twice", a.name()));
            }
        }
        let unique_seeds: BTreeSet<_> = self.seeds.iter().collect();
        if unique_seeds.len() != self.seeds.len() {
            return fail("seeds must be distinct".into());
        }
        self.training.pcgrbm(0).validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seeds = [1]
[[datasets]]
kind = "synth"
name = "blobs"
n = 30
k = 3
p = 2
separation = 5.0
seed = 0

[[algorithms]]
method = "kmeans"
features = "raw"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.folds, 10);
        assert_eq!(cfg.constraint_fractions.len(), 8);
        assert!((cfg.constraint_fractions[7] - 0.08).abs() < 1e-15);
        assert_eq!(cfg.training.lambda, 0.7);
        assert_eq!(cfg.training.epsilon, 1e-8);
        assert!(!cfg.transitive_closure);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str(&MINIMAL.replace("seeds = [1]", "seeds = []")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{MINIMAL}\nfolds = 1")).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{MINIMAL}\nbogus = 1")).is_err());
        let unsorted = format!("constraint_fractions = [0.05, 0.01]\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml_str(&unsorted).is_err());
        let twice = format!("{MINIMAL}\n[[algorithms]]\nmethod = \"kmeans\"\nfeatures = \"raw\"\n");
        assert!(ExperimentConfig::from_toml_str(&twice).is_err());
    }

    #[test]
    fn algorithm_names() {
        assert_eq!(AlgorithmSpec::new(Method::CopKmeans, FeatureSource::Raw).name(), "cop-kmeans-raw");
        assert!(AlgorithmSpec::new(Method::Ap, FeatureSource::Pcgrbm).uses_constraints());
        assert!(!AlgorithmSpec::new(Method::Spectral, FeatureSource::Grbm).uses_constraints());
    }
}
