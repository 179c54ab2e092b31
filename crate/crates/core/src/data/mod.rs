//! Dataset ingestion, z-scoring, fold splitting, synthetic blobs and
//! pairwise-constraint sampling.

mod constraints;
mod folds;

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub use constraints::{
    sample_constraints, sample_constraints_incremental, ConstraintSet, Fingerprint, Pair,
};
pub use folds::{kfold, FoldSplit};

/// An `n × p` feature matrix with optional integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub normalized: bool,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument(format!(
                "dataset must be non-empty, got {n}x{p}"
            )));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature at row {} column {}",
                idx / p,
                idx % p
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            normalized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes, taken as `max(label) + 1`.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().max().map_or(0, |m| m + 1))
    }

    /// Row subset in the given order; labels and the normalized flag follow.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            normalized: self.normalized,
        }
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::NotNormalized(self.name.clone()))
        }
    }
}

/// Reads a headered, comma-separated file. Feature cells must parse as
/// `f64`; the optional label column may hold any strings, which are mapped
/// to `0..K` in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };

    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_owned()))?,
        ),
        None => None,
    };

    let width = headers.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // header is line 1
        let line = row + 2;
        if record.len() != width {
            return Err(Error::RaggedRow {
                row: line,
                expected: width,
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_idx {
                let next = label_ids.len();
                labels.push(*label_ids.entry(cell.to_owned()).or_insert(next));
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row: line,
                column: headers[col].clone(),
                value: cell.to_owned(),
            })?;
            values.push(value);
        }
        rows += 1;
    }

    let p = width - usize::from(label_idx.is_some());
    let features = Array2::from_shape_vec((rows, p), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, features, label_idx.map(|_| labels))
}

/// A numeric table with a leading row-name column.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTable {
    pub values: Array2<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

/// Reads `name,v1,v2,...` rows under a header whose first cell labels the
/// name column.
pub fn load_csv_table(path: impl AsRef<Path>) -> Result<NamedTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.len() < 2 {
        return Err(Error::InvalidArgument(
            "table needs a name column and at least one value column".into(),
        ));
    }
    let width = headers.len();
    let mut values = Vec::new();
    let mut row_names = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = row + 2;
        if record.len() != width {
            return Err(Error::RaggedRow {
                row: line,
                expected: width,
                found: record.len(),
            });
        }
        row_names.push(record[0].to_owned());
        for (col, cell) in record.iter().enumerate().skip(1) {
            values.push(cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                row: line,
                column: headers[col].clone(),
                value: cell.to_owned(),
            })?);
        }
    }
    let values = Array2::from_shape_vec((row_names.len(), width - 1), values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(NamedTable {
        values,
        row_names,
        col_names: headers[1..].to_vec(),
    })
}

/// Writes features (and labels, as a trailing `label` column) with a
/// `f0..f{p-1}` header. Values use shortest round-trip formatting.
pub fn write_csv(path: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut header: Vec<String> = (0..d.p()).map(|j| format!("f{j}")).collect();
    if d.labels.is_some() {
        header.push("label".into());
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in d.features.outer_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &d.labels {
            cells.push(labels[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Per-column z-scoring with the population standard deviation. Constant
/// columns become all-zero.
pub fn normalize(d: &Dataset) -> Dataset {
    let mut features = d.features.clone();
    let n = features.nrows() as f64;
    for mut col in features.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let first = col[0];
        if std == 0.0 || col.iter().all(|&v| v == first) {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    Dataset {
        name: d.name.clone(),
        features,
        labels: d.labels.clone(),
        normalized: true,
    }
}

/// `k` isotropic unit-variance Gaussian clusters whose centers are pairwise
/// at least `separation` apart. Instance `i` belongs to cluster `i*k/n`.
pub fn synth_blobs(n: usize, k: usize, p: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if k == 0 || n < k || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "synth_blobs needs n >= k >= 1 and p >= 1 (n={n}, k={k}, p={p})"
        )));
    }
    if !(separation > 0.0) {
        return Err(Error::InvalidArgument("separation must be > 0".into()));
    }
    let mut centers = Array2::<f64>::zeros((k, p));
    if k <= p {
        // scaled basis vectors: every pair is exactly `separation` apart
        let scale = separation / std::f64::consts::SQRT_2;
        for c in 0..k {
            centers[[c, c]] = scale;
        }
    } else {
        for c in 0..k {
            centers[[c, 0]] = c as f64 * separation;
        }
    }

    let mut rng = rng::seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let mut features = Array2::<f64>::zeros((n, p));
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        let c = labels[i];
        for (j, v) in row.iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *v = centers[[c, j]] + noise;
        }
    }
    Dataset::new(format!("blobs-{n}x{p}-k{k}"), features, Some(labels))
}
