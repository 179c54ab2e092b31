//! Cross-validated experiments: normalization, constraint sampling from
//! training folds, GRBM/pcGRBM training, feature extraction, clustering of
//! the test fold, scoring and aggregation.

mod config;
mod report;

use std::collections::BTreeSet;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    AlgorithmSpec, DatasetSource, ExperimentConfig, FeatureSource, Method, ReportFormat,
    TrainingSection,
};
pub use report::{emit_report, parse_markdown_cells, MarkdownCell};

use crate::clustering::{
    affinity_propagation, cop_kmeans, kmeans, spectral, ApConfig, ClusteringResult,
};
use crate::data::{self, ConstraintSet, Dataset, Pair};
use crate::error::{Error, Result};
use crate::eval::{self, FriedmanResult, RankTable, ScoreMatrix};
use crate::grbm::{self, GrbmParams};
use crate::pcgrbm;
use crate::rng::derive_seed;

pub const METRICS: [&str; 2] = ["accuracy", "purity"];

/// K-means restarts used inside the pipeline.
pub const KMEANS_RESTARTS: usize = 10;

const TAG_FOLDS: u64 = 1;
const TAG_CONSTRAINTS: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_CLUSTER: u64 = 4;

/// What a clustering algorithm sees for one fold.
pub struct ClusterInput<'a> {
    pub train: ArrayView2<'a, f64>,
    pub test: ArrayView2<'a, f64>,
    /// Constraints over training rows (local indices). Empty for algorithms
    /// that do not use constraints.
    pub train_constraints: &'a ConstraintSet,
    /// Number of classes in the dataset.
    pub k: usize,
    pub seed: u64,
}

/// A clustering algorithm the pipeline can run. The built-in methods are
/// [`AlgorithmSpec`]s; other implementations can be passed to
/// [`run_experiment_with`].
pub trait ClusterAdapter: Send + Sync {
    fn name(&self) -> String;
    fn features(&self) -> FeatureSource;
    /// Whether the result depends on the constraint set, which makes the
    /// pipeline rerun it for every constraint fraction.
    fn uses_constraints(&self) -> bool;
    /// Returns one assignment per test row.
    fn cluster(&self, input: &ClusterInput) -> Result<ClusteringResult>;
}

impl ClusterAdapter for AlgorithmSpec {
    fn name(&self) -> String {
        AlgorithmSpec::name(self)
    }

    fn features(&self) -> FeatureSource {
        self.features
    }

    fn uses_constraints(&self) -> bool {
        AlgorithmSpec::uses_constraints(self)
    }

    fn cluster(&self, input: &ClusterInput) -> Result<ClusteringResult> {
        let k = input.k.min(input.test.nrows());
        match self.method {
            Method::Kmeans => kmeans(input.test, k, KMEANS_RESTARTS, input.seed),
            Method::Spectral => spectral(input.test, k, input.seed),
            Method::Ap => affinity_propagation(input.test, &ApConfig::default()),
            Method::CopKmeans => {
                // Transductive: training rows carry the constraints, only the
                // test rows are scored.
                let all = concatenate(Axis(0), &[input.train, input.test])
                    .map_err(|e| Error::Dimension(e.to_string()))?;
                let r = cop_kmeans(all.view(), input.k, input.train_constraints, input.seed)?;
                let n_train = input.train.nrows();
                Ok(ClusteringResult::compacted(
                    &r.assignments[n_train..],
                    r.converged,
                    r.iterations,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub dataset: String,
    pub algorithm: String,
    pub fraction: f64,
    pub seed: u64,
    pub fold: usize,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub dataset: String,
    pub algorithm: String,
    pub fraction: f64,
    pub seed: u64,
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample variance (divisor `count − 1`); zero for a single score.
    pub variance: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Summary {
            mean,
            variance,
            count: values.len(),
        })
    }
}

/// Aggregate over seeds and folds for one (dataset, algorithm, fraction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub dataset: String,
    pub algorithm: String,
    pub fraction: f64,
    pub accuracy: Option<Summary>,
    pub purity: Option<Summary>,
    /// One entry per failed (seed, fold) run.
    pub failures: Vec<String>,
}

impl Cell {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn metric(&self, metric: &str) -> Option<Summary> {
        match metric {
            "accuracy" => self.accuracy,
            "purity" => self.purity,
            _ => None,
        }
    }
}

/// Constraint pairs (global row indices) and test rows of one fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldProvenance {
    pub dataset: String,
    pub seed: u64,
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub constraints: Vec<FractionConstraints>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionConstraints {
    pub fraction: f64,
    pub must: Vec<Pair>,
    pub cannot: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Significance {
    /// Mean accuracy at the largest constraint fraction.
    pub scores: ScoreMatrix,
    pub ranks: RankTable,
    pub friedman: FriedmanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub datasets: Vec<String>,
    pub algorithms: Vec<String>,
    pub fractions: Vec<f64>,
    /// Ordered by dataset, then algorithm, then fraction.
    pub cells: Vec<Cell>,
    pub records: Vec<ScoreRecord>,
    pub failures: Vec<RunFailure>,
    pub provenance: Vec<FoldProvenance>,
    pub significance: Option<Significance>,
    /// Why `significance` is absent, when it is.
    pub significance_note: Option<String>,
}

impl Report {
    pub fn cell(&self, dataset: &str, algorithm: &str, fraction_index: usize) -> Option<&Cell> {
        let d = self.datasets.iter().position(|x| x == dataset)?;
        let a = self.algorithms.iter().position(|x| x == algorithm)?;
        let f = self.fractions.len();
        self.cells
            .get((d * self.algorithms.len() + a) * f + fraction_index)
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(Cell::failed)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    run_experiment_with(cfg, &[])
}

/// Runs the configured algorithms followed by `extra` adapters.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    extra: &[&dyn ClusterAdapter],
) -> Result<Report> {
    cfg.validate()?;
    let mut adapters: Vec<&dyn ClusterAdapter> = cfg
        .algorithms
        .iter()
        .map(|a| a as &dyn ClusterAdapter)
        .collect();
    adapters.extend_from_slice(extra);
    let algorithms: Vec<String> = adapters.iter().map(|a| a.name()).collect();
    if algorithms.iter().collect::<BTreeSet<_>>().len() != algorithms.len() {
        return Err(Error::Config(format!("duplicate algorithm names in {algorithms:?}")));
    }

    let mut datasets = Vec::with_capacity(cfg.datasets.len());
    for src in &cfg.datasets {
        let d = data::normalize(&src.load()?);
        if d.labels.is_none() {
            return Err(Error::MissingLabels);
        }
        if d.n() < cfg.folds {
            return Err(Error::Config(format!(
                "dataset {} has {} rows, fewer than {} folds",
                d.name,
                d.n(),
                cfg.folds
            )));
        }
        datasets.push(d);
    }
    let names: Vec<String> = datasets.iter().map(|d| d.name.clone()).collect();
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(Error::Config(format!("duplicate dataset names in {names:?}")));
    }

    let mut tasks = Vec::new();
    for (di, d) in datasets.iter().enumerate() {
        for &seed in &cfg.seeds {
            let splits = data::kfold(d.n(), cfg.folds, derive_seed(&[cfg.master_seed, seed, di as u64, TAG_FOLDS]))?;
            for (fold, split) in splits.into_iter().enumerate() {
                tasks.push(FoldTask {
                    dataset_index: di,
                    seed,
                    fold,
                    split,
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outputs: Vec<FoldOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_fold(cfg, &datasets[t.dataset_index], t, &adapters))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut provenance = Vec::new();
    for out in outputs {
        records.extend(out.records);
        failures.extend(out.failures);
        provenance.push(out.provenance);
    }

    let cells = aggregate(&names, &algorithms, &cfg.constraint_fractions, &records, &failures);
    let mut report = Report {
        datasets: names,
        algorithms,
        fractions: cfg.constraint_fractions.clone(),
        cells,
        records,
        failures,
        provenance,
        significance: None,
        significance_note: None,
    };
    match significance(&report) {
        Ok(s) => report.significance = Some(s),
        Err(note) => report.significance_note = Some(note),
    }
    Ok(report)
}

struct FoldTask {
    dataset_index: usize,
    seed: u64,
    fold: usize,
    split: data::FoldSplit,
}

struct FoldOutput {
    records: Vec<ScoreRecord>,
    failures: Vec<RunFailure>,
    provenance: FoldProvenance,
}

type Features = std::result::Result<(Array2<f64>, Array2<f64>), String>;

fn extract_pair(params: Result<GrbmParams>, train: &Dataset, test: &Dataset) -> Features {
    let params = params.map_err(|e| e.to_string())?;
    let tr = grbm::extract_features(&params, train).map_err(|e| e.to_string())?;
    let te = grbm::extract_features(&params, test).map_err(|e| e.to_string())?;
    Ok((tr, te))
}

fn run_fold(
    cfg: &ExperimentConfig,
    d: &Dataset,
    task: &FoldTask,
    adapters: &[&dyn ClusterAdapter],
) -> FoldOutput {
    let di = task.dataset_index as u64;
    let fold = task.fold as u64;
    let split = &task.split;
    let train = d.select_rows(&split.train_indices);
    let test = d.select_rows(&split.test_indices);
    let train_labels = train.labels.as_deref().expect("labels checked");
    let test_labels = test.labels.as_deref().expect("labels checked");
    let k = d.num_classes().expect("labels checked");

    let constraint_seed = derive_seed(&[cfg.master_seed, task.seed, di, fold, TAG_CONSTRAINTS]);
    let constraint_sets: std::result::Result<Vec<ConstraintSet>, String> =
        data::sample_constraints_incremental(train_labels, &cfg.constraint_fractions, constraint_seed)
            .and_then(|sets| {
                if cfg.transitive_closure {
                    sets.iter().map(ConstraintSet::transitive_closure).collect()
                } else {
                    Ok(sets)
                }
            })
            .map_err(|e| e.to_string());

    let mut provenance = FoldProvenance {
        dataset: d.name.clone(),
        seed: task.seed,
        fold: task.fold,
        test_indices: split.test_indices.clone(),
        constraints: Vec::new(),
    };
    if let Ok(sets) = &constraint_sets {
        let test_rows: BTreeSet<usize> = split.test_indices.iter().copied().collect();
        for (set, &fraction) in sets.iter().zip(&cfg.constraint_fractions) {
            let global = set
                .remap(&split.train_indices)
                .expect("constraints index training rows");
            assert!(
                global
                    .pairs()
                    .all(|(a, b)| !test_rows.contains(a) && !test_rows.contains(b)),
                "constraint pair touches a test row"
            );
            provenance.constraints.push(FractionConstraints {
                fraction,
                must: global.must,
                cannot: global.cannot,
            });
        }
    }

    let train_seed = derive_seed(&[cfg.master_seed, task.seed, di, fold, TAG_TRAIN]);
    let q = cfg.hidden_width;
    let needs = |src: FeatureSource| adapters.iter().any(|a| a.features() == src);
    let grbm_features: Option<Features> = needs(FeatureSource::Grbm).then(|| {
        extract_pair(
            grbm::train_grbm(&train, &cfg.training.grbm(train_seed), q),
            &train,
            &test,
        )
    });
    let pcgrbm_features: Vec<Features> = if needs(FeatureSource::Pcgrbm) {
        match &constraint_sets {
            Ok(sets) => sets
                .iter()
                .map(|c| {
                    extract_pair(
                        pcgrbm::train_pcgrbm(&train, c, &cfg.training.pcgrbm(train_seed), q),
                        &train,
                        &test,
                    )
                })
                .collect(),
            Err(e) => vec![Err(e.clone()); cfg.constraint_fractions.len()],
        }
    } else {
        Vec::new()
    };

    let raw: Features = Ok((train.features.clone(), test.features.clone()));
    let empty = ConstraintSet::empty();
    let cluster_seed = derive_seed(&[cfg.master_seed, task.seed, di, fold, TAG_CLUSTER]);
    let mut records = Vec::new();
    let mut failures = Vec::new();

    for adapter in adapters {
        let name = adapter.name();
        let mut shared: Option<std::result::Result<(f64, f64), String>> = None;
        for (fi, &fraction) in cfg.constraint_fractions.iter().enumerate() {
            let outcome = match (&shared, adapter.uses_constraints()) {
                (Some(o), false) => o.clone(),
                _ => {
                    let features = match adapter.features() {
                        FeatureSource::Raw => &raw,
                        FeatureSource::Grbm => grbm_features.as_ref().expect("trained when needed"),
                        FeatureSource::Pcgrbm => &pcgrbm_features[fi],
                    };
                    let constraints = if adapter.uses_constraints() {
                        constraint_sets.as_ref().map(|s| &s[fi]).map_err(Clone::clone)
                    } else {
                        Ok(&empty)
                    };
                    let o = score_one(*adapter, features, constraints, k, cluster_seed, test_labels);
                    shared = Some(o.clone());
                    o
                }
            };
            match outcome {
                Ok((acc, pur)) => {
                    for (metric, value) in METRICS.into_iter().zip([acc, pur]) {
                        records.push(ScoreRecord {
                            dataset: d.name.clone(),
                            algorithm: name.clone(),
                            fraction,
                            seed: task.seed,
                            fold: task.fold,
                            metric,
                            value,
                        });
                    }
                }
                Err(reason) => failures.push(RunFailure {
                    dataset: d.name.clone(),
                    algorithm: name.clone(),
                    fraction,
                    seed: task.seed,
                    fold: task.fold,
                    reason,
                }),
            }
        }
    }

    FoldOutput {
        records,
        failures,
        provenance,
    }
}

fn score_one(
    adapter: &dyn ClusterAdapter,
    features: &Features,
    constraints: std::result::Result<&ConstraintSet, String>,
    k: usize,
    seed: u64,
    test_labels: &[usize],
) -> std::result::Result<(f64, f64), String> {
    let (train, test) = features.as_ref().map_err(Clone::clone)?;
    let constraints = constraints?;
    let input = ClusterInput {
        train: train.view(),
        test: test.view(),
        train_constraints: constraints,
        k,
        seed,
    };
    let run = || -> Result<(f64, f64)> {
        let r = adapter.cluster(&input)?;
        if r.assignments.len() != test_labels.len() {
            return Err(Error::Dimension(format!(
                "{} returned {} assignments for {} test rows",
                adapter.name(),
                r.assignments.len(),
                test_labels.len()
            )));
        }
        Ok((eval::accuracy(test_labels, &r)?, eval::purity(test_labels, &r)?))
    };
    run().map_err(|e| e.to_string())
}

fn aggregate(
    datasets: &[String],
    algorithms: &[String],
    fractions: &[f64],
    records: &[ScoreRecord],
    failures: &[RunFailure],
) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(datasets.len() * algorithms.len() * fractions.len());
    for d in datasets {
        for a in algorithms {
            for &f in fractions {
                let matches = |r: &&ScoreRecord, metric: &str| {
                    &r.dataset == d && &r.algorithm == a && r.fraction == f && r.metric == metric
                };
                let values = |metric: &str| {
                    records
                        .iter()
                        .filter(|r| matches(r, metric))
                        .map(|r| r.value)
                        .collect::<Vec<_>>()
                };
                cells.push(Cell {
                    dataset: d.clone(),
                    algorithm: a.clone(),
                    fraction: f,
                    accuracy: Summary::of(&values("accuracy")),
                    purity: Summary::of(&values("purity")),
                    failures: failures
                        .iter()
                        .filter(|x| &x.dataset == d && &x.algorithm == a && x.fraction == f)
                        .map(|x| format!("seed {} fold {}: {}", x.seed, x.fold, x.reason))
                        .collect(),
                });
            }
        }
    }
    cells
}

/// Friedman aligned-ranks test over mean accuracies at the largest fraction.
fn significance(r: &Report) -> std::result::Result<Significance, String> {
    let (d, g) = (r.datasets.len(), r.algorithms.len());
    if d < 2 || g < 2 {
        return Err(format!(
            "the significance test needs at least 2 datasets and 2 algorithms, got {d} and {g}"
        ));
    }
    let last = r.fractions.len() - 1;
    let mut scores = Array2::zeros((d, g));
    for (i, ds) in r.datasets.iter().enumerate() {
        for (j, alg) in r.algorithms.iter().enumerate() {
            let cell = r.cell(ds, alg, last).expect("every cell exists");
            match (cell.failed(), cell.accuracy) {
                (false, Some(s)) => scores[[i, j]] = s.mean,
                _ => return Err(format!("cell {ds}/{alg} failed")),
            }
        }
    }
    let scores = ScoreMatrix::new(scores, r.datasets.clone(), r.algorithms.clone())
        .map_err(|e| e.to_string())?;
    let ranks = eval::aligned_ranks(&scores, true);
    let friedman = eval::friedman_test(&ranks).map_err(|e| e.to_string())?;
    Ok(Significance {
        scores,
        ranks,
        friedman,
    })
}
