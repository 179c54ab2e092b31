//! The `pcgrbm` command line.
//!
//! Usage errors exit with status 2, runtime errors with status 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::clustering::{affinity_propagation, cop_kmeans, kmeans, spectral, ApConfig, ClusteringResult};
use crate::data::{self, ConstraintSet, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, RankTable, ScoreMatrix};
use crate::grbm::{self, BatchSize, TrainConfig};
use crate::model_io::ModelFile;
use crate::pcgrbm::{self, PcgrbmConfig, SignMode, DEFAULT_EPSILON, DEFAULT_LAMBDA};
use crate::pipeline::{self, ExperimentConfig, ReportFormat};

const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "pcgrbm", version, about = "Pairwise-constrained Gaussian RBM features, clustering and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Z-score every feature column and write the result as CSV.
    Normalize(NormalizeArgs),
    /// Train a GRBM on a CSV dataset and save the model.
    TrainGrbm(TrainGrbmArgs),
    /// Train a pcGRBM with must-link/cannot-link constraints and save the model.
    TrainPcgrbm(TrainPcgrbmArgs),
    /// Write hidden-unit probabilities of a saved model for every row.
    Extract(ExtractArgs),
    /// Cluster the rows of a CSV file and write one assignment per row.
    Cluster(ClusterArgs),
    /// Score cluster assignments against labels (accuracy, purity).
    Evaluate(EvaluateArgs),
    /// Friedman aligned ranks test on a dataset × algorithm score matrix.
    Stats(StatsArgs),
    /// Run a cross-validated experiment described by a TOML file.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Column holding class labels; excluded from the features.
    #[arg(long)]
    pub labels_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number of hidden units.
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Learning rate.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// "full" or a mini-batch size.
    #[arg(long, default_value = "full")]
    pub batch_size: BatchSize,
    #[arg(long)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epsilon: self.epsilon,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainGrbmArgs {
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignModeArg {
    PaperExact,
    Descent,
}

impl From<SignModeArg> for SignMode {
    fn from(m: SignModeArg) -> Self {
        match m {
            SignModeArg::PaperExact => SignMode::PaperExact,
            SignModeArg::Descent => SignMode::Descent,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("constraint_source").required(true).args(["constraints", "fraction"])))]
pub struct TrainPcgrbmArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Weight of the likelihood term in the combined update.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = SignModeArg::PaperExact)]
    pub sign_mode: SignModeArg,
    /// Step size on the constraint gradient in descent mode.
    #[arg(long, default_value_t = 1.0)]
    pub constraint_rate: f64,
    /// CSV with header `kind,i,j`; kind is `must` or `cannot`, i and j are
    /// 0-based row indices of --input.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Sample constraints from this fraction of each class (needs
    /// --labels-column).
    #[arg(long, requires = "labels_column")]
    pub fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Kmeans,
    Spectral,
    Ap,
    CopKmeans,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Kmeans)]
    pub algorithm: AlgorithmArg,
    /// Number of clusters; required except for ap, which finds its own.
    #[arg(long, required_if_eq_any([("algorithm", "kmeans"), ("algorithm", "spectral"), ("algorithm", "cop-kmeans")]))]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Constraint CSV for cop-kmeans (header `kind,i,j`).
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// CSV with columns `row,cluster` and, with --labels-column, `label`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV holding a `cluster` column and a label column, as written by
    /// `cluster --labels-column`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "label")]
    pub labels_column: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// CSV score matrix: first column dataset names, one column per algorithm.
    #[arg(long)]
    pub input: PathBuf,
    /// The input already holds aligned ranks rather than scores.
    #[arg(long)]
    pub ranks: bool,
    /// Rank smaller scores as better.
    #[arg(long)]
    pub lower_is_better: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub input: PathBuf,
    /// Master seed mixed into every random stream of the run.
    #[arg(long)]
    pub seed: u64,
    /// Report directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides `threads`.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Comma-separated subset of csv,json,markdown; overrides `formats`.
    #[arg(long, value_delimiter = ',')]
    pub format: Option<Vec<String>>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Normalize(a) => {
            let d = load(&a.input)?;
            data::write_csv(&a.out, &data::normalize(&d))?;
        }
        Command::TrainGrbm(a) => {
            let t = &a.train;
            let d = data::normalize(&load(&t.input)?);
            let params = grbm::train_grbm(&d, &t.config(), t.hidden)?;
            ModelFile::grbm(params, t.config()).save(&t.out)?;
        }
        Command::TrainPcgrbm(a) => {
            let t = &a.train;
            let d = data::normalize(&load(&t.input)?);
            let constraints = match (&a.constraints, a.fraction) {
                (Some(path), _) => read_constraints(path)?,
                (None, Some(f)) => {
                    let labels = d.labels.as_deref().ok_or(Error::MissingLabels)?;
                    data::sample_constraints(labels, f, t.seed)?
                }
                (None, None) => unreachable!("clap requires one constraint source"),
            };
            let cfg = PcgrbmConfig {
                base: t.config(),
                lambda: a.lambda,
                sign_mode: a.sign_mode.into(),
                constraint_rate: a.constraint_rate,
                use_sampled_hidden: true,
            };
            let params = pcgrbm::train_pcgrbm(&d, &constraints, &cfg, t.hidden)?;
            ModelFile::pcgrbm(params, &cfg, &constraints).save(&t.out)?;
        }
        Command::Extract(a) => {
            let model = ModelFile::load(&a.model)?;
            let d = data::normalize(&load(&a.input)?);
            let h = grbm::extract_features(&model.params, &d)?;
            let mut out: String = (0..h.ncols()).map(|j| format!("h{j}")).collect::<Vec<_>>().join(",");
            out.push('\n');
            for row in h.rows() {
                out.push_str(&row.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
            std::fs::write(&a.out, out).map_err(|e| Error::io(&a.out, e))?;
        }
        Command::Cluster(a) => {
            let d = load(&a.input)?;
            let x = d.features.view();
            let r: ClusteringResult = match a.algorithm {
                AlgorithmArg::Kmeans => kmeans(x, a.k.expect("required by clap"), KMEANS_RESTARTS, a.seed)?,
                AlgorithmArg::Spectral => spectral(x, a.k.expect("required by clap"), a.seed)?,
                AlgorithmArg::Ap => affinity_propagation(x, &ApConfig::default())?,
                AlgorithmArg::CopKmeans => {
                    let c = match &a.constraints {
                        Some(p) => read_constraints(p)?,
                        None => ConstraintSet::empty(),
                    };
                    cop_kmeans(x, a.k.expect("required by clap"), &c, a.seed)?
                }
            };
            let mut out = String::from("row,cluster");
            if d.labels.is_some() {
                out.push_str(",label");
            }
            out.push('\n');
            for (i, c) in r.assignments.iter().enumerate() {
                out.push_str(&format!("{i},{c}"));
                if let Some(l) = &d.labels {
                    out.push_str(&format!(",{}", l[i]));
                }
                out.push('\n');
            }
            std::fs::write(&a.out, out).map_err(|e| Error::io(&a.out, e))?;
            if let Some(labels) = &d.labels {
                println!("accuracy={}", eval::accuracy(labels, &r)?);
                println!("purity={}", eval::purity(labels, &r)?);
            }
        }
        Command::Evaluate(a) => {
            let (labels, clusters) = read_assignments(&a.input, &a.labels_column)?;
            let r = ClusteringResult::compacted(&clusters, true, 0);
            let acc = eval::accuracy(&labels, &r)?;
            let pur = eval::purity(&labels, &r)?;
            match a.format {
                OutputFormat::Text => println!("accuracy={acc}\npurity={pur}"),
                OutputFormat::Json => println!(
                    "{}",
                    serde_json::json!({ "accuracy": acc, "purity": pur, "clusters": r.k })
                ),
            }
        }
        Command::Stats(a) => {
            let m = ScoreMatrix::from_csv(&a.input)?;
            let ranks = if a.ranks {
                RankTable::from_ranks(m.scores.clone())?
            } else {
                eval::aligned_ranks(&m, !a.lower_is_better)
            };
            let r = eval::friedman_test(&ranks)?;
            match a.format {
                OutputFormat::Text => {
                    println!("T={:.4}", r.t);
                    println!("df={}", r.df);
                    println!("p_one_tailed={:e}", r.p_one_tailed);
                    println!("p_two_tailed={:e}", r.p_two_tailed);
                }
                OutputFormat::Json => println!(
                    "{}",
                    serde_json::to_string(&r).map_err(|e| Error::InvalidArgument(e.to_string()))?
                ),
            }
        }
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::from_toml_file(&a.input)?;
            cfg.master_seed = a.seed;
            if let Some(out) = a.out {
                cfg.output_dir = out;
            }
            if let Some(t) = a.threads {
                cfg.threads = t;
            }
            if let Some(formats) = &a.format {
                cfg.formats = formats
                    .iter()
                    .map(|f| f.trim().parse())
                    .collect::<Result<Vec<ReportFormat>>>()?;
            }
            let report = pipeline::run_experiment(&cfg)?;
            let files = pipeline::emit_report(&report, &cfg.formats, &cfg.output_dir)?;
            for f in &files {
                println!("{}", f.display());
            }
            if report.any_failed() {
                let n = report.cells.iter().filter(|c| c.failed()).count();
                eprintln!("{n} cell(s) failed; see the report for reasons");
                return Ok(1);
            }
        }
    }
    Ok(0)
}

fn load(input: &InputArgs) -> Result<Dataset> {
    data::load_csv(&input.input, input.labels_column.as_deref())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))
}

/// Reads a `kind,i,j` constraint file.
pub fn read_constraints(path: &Path) -> Result<ConstraintSet> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let (kind, i, j) = (column(&headers, "kind")?, column(&headers, "i")?, column(&headers, "j")?);
    let mut must = Vec::new();
    let mut cannot = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let index = |c: usize| -> Result<usize> {
            rec[c].trim().parse().map_err(|_| Error::NonNumeric {
                row: row + 2,
                column: headers[c].to_string(),
                value: rec[c].to_string(),
            })
        };
        let pair = (index(i)?, index(j)?);
        match rec[kind].trim() {
            "must" => must.push(pair),
            "cannot" => cannot.push(pair),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "{}: row {}: constraint kind must be must or cannot, got {other:?}",
                    path.display(),
                    row + 2
                )))
            }
        }
    }
    ConstraintSet::new(must, cannot)
}

/// Writes a `kind,i,j` constraint file.
pub fn write_constraints(path: &Path, c: &ConstraintSet) -> Result<()> {
    let mut out = String::from("kind,i,j\n");
    for (kind, pairs) in [("must", &c.must), ("cannot", &c.cannot)] {
        for (i, j) in pairs {
            out.push_str(&format!("{kind},{i},{j}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads labels (mapped to ids in first-appearance order) and integer
/// cluster ids.
fn read_assignments(path: &Path, labels_column: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let lc = column(&headers, labels_column)?;
    let cc = column(&headers, "cluster")?;
    let mut names: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut clusters = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let name = rec[lc].trim();
        let id = match names.iter().position(|n| n == name) {
            Some(id) => id,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        labels.push(id);
        clusters.push(rec[cc].trim().parse().map_err(|_| Error::NonNumeric {
            row: row + 2,
            column: "cluster".into(),
            value: rec[cc].to_string(),
        })?);
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: no rows", path.display())));
    }
    Ok((labels, clusters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_is_required_for_stochastic_commands() {
        for cmd in [
            vec!["pcgrbm", "train-grbm", "--input", "x.csv", "--out", "m"],
            vec!["pcgrbm", "train-pcgrbm", "--input", "x.csv", "--out", "m", "--constraints", "c.csv"],
            vec!["pcgrbm", "cluster", "--input", "x.csv", "--k", "2", "--out", "o"],
            vec!["pcgrbm", "experiment", "--input", "e.toml"],
        ] {
            let err = Cli::try_parse_from(&cmd).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{cmd:?}");
        }
    }

    #[test]
    fn constraint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = ConstraintSet::new([(0, 3), (1, 2)], [(2, 5)]).unwrap();
        write_constraints(&path, &c).unwrap();
        assert_eq!(read_constraints(&path).unwrap(), c);
        std::fs::write(&path, "kind,i,j\nmaybe,0,1\n").unwrap();
        assert!(read_constraints(&path).is_err());
    }
}
