//! Clustering metrics and the Friedman Aligned Ranks test.

use ndarray::{Array1, Array2};
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::clustering::ClusteringResult;
use crate::error::{Error, Result};

fn confusion(true_labels: &[usize], result: &ClusteringResult) -> Result<Array2<usize>> {
    if true_labels.len() != result.assignments.len() {
        return Err(Error::Dimension(format!(
            "{} labels vs {} assignments",
            true_labels.len(),
            result.assignments.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::InvalidArgument("empty labelling".into()));
    }
    let classes = true_labels.iter().max().unwrap() + 1;
    let clusters = result
        .assignments
        .iter()
        .max()
        .map_or(0, |m| m + 1)
        .max(result.k);
    let mut table = Array2::zeros((classes, clusters));
    for (&l, &c) in true_labels.iter().zip(&result.assignments) {
        table[[l, c]] += 1;
    }
    Ok(table)
}

/// Fraction of instances whose cluster maps to their class under the best
/// one-to-one cluster→class mapping. Unequal class and cluster counts are
/// handled by zero-padding the confusion matrix to a square.
pub fn accuracy(true_labels: &[usize], result: &ClusteringResult) -> Result<f64> {
    let table = confusion(true_labels, result)?;
    let size = table.nrows().max(table.ncols());
    let mut weights = Matrix::new(size, size, 0i64);
    for ((l, c), &count) in table.indexed_iter() {
        weights[(c, l)] = count as i64;
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / true_labels.len() as f64)
}

/// Size-weighted mean over clusters of the dominant-class fraction.
pub fn purity(true_labels: &[usize], result: &ClusteringResult) -> Result<f64> {
    let table = confusion(true_labels, result)?;
    let dominant: usize = table
        .columns()
        .into_iter()
        .map(|col| col.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(dominant as f64 / true_labels.len() as f64)
}

/// Scores of `G` algorithms (columns) on `D` datasets (rows).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMatrix {
    pub scores: Array2<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

impl ScoreMatrix {
    pub fn new(scores: Array2<f64>, row_names: Vec<String>, col_names: Vec<String>) -> Result<Self> {
        let (d, g) = scores.dim();
        if d < 2 || g < 2 {
            return Err(Error::InvalidArgument(format!(
                "score matrix needs at least 2 datasets and 2 algorithms, got {d}x{g}"
            )));
        }
        if row_names.len() != d || col_names.len() != g {
            return Err(Error::Dimension("score matrix names do not match shape".into()));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite score".into()));
        }
        Ok(ScoreMatrix {
            scores,
            row_names,
            col_names,
        })
    }

    /// Reads a CSV whose header names the algorithms (after a leading
    /// dataset-name column) and whose rows are `name,score,score,...`.
    pub fn from_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let d = crate::data::load_csv_table(path)?;
        ScoreMatrix::new(d.values, d.row_names, d.col_names)
    }
}

/// Jointly ranked, row-aligned scores with their marginal sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub ranks: Array2<f64>,
    pub row_sums: Array1<f64>,
    pub col_sums: Array1<f64>,
}

impl RankTable {
    /// Wraps an already-computed rank matrix.
    pub fn from_ranks(ranks: Array2<f64>) -> Result<Self> {
        let (d, g) = ranks.dim();
        if d < 2 || g < 2 {
            return Err(Error::InvalidArgument(format!(
                "rank table needs at least 2x2, got {d}x{g}"
            )));
        }
        Ok(RankTable {
            row_sums: ranks.sum_axis(ndarray::Axis(1)),
            col_sums: ranks.sum_axis(ndarray::Axis(0)),
            ranks,
        })
    }

    pub fn datasets(&self) -> usize {
        self.ranks.nrows()
    }

    pub fn algorithms(&self) -> usize {
        self.ranks.ncols()
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Subtracts each row's mean, then ranks all `G·D` aligned values together
/// (rank 1 = best) with mid-ranks for ties.
pub fn aligned_ranks(m: &ScoreMatrix, higher_is_better: bool) -> RankTable {
    let (d, g) = m.scores.dim();
    let mut aligned = m.scores.clone();
    for mut row in aligned.rows_mut() {
        let mean = row.sum() / g as f64;
        row.mapv_inplace(|v| v - mean);
    }

    let mut cells: Vec<(f64, usize)> = aligned.iter().copied().zip(0..d * g).collect();
    cells.sort_by(|a, b| {
        let ord = a.0.total_cmp(&b.0);
        (if higher_is_better { ord.reverse() } else { ord }).then(a.1.cmp(&b.1))
    });

    let mut ranks = Array2::zeros((d, g));
    let mut start = 0;
    while start < cells.len() {
        let mut end = start + 1;
        while end < cells.len() && nearly_equal(cells[end].0, cells[start].0) {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &(_, flat) in &cells[start..end] {
            ranks[[flat / g, flat % g]] = mid;
        }
        start = end;
    }
    RankTable::from_ranks(ranks).expect("shape validated by ScoreMatrix")
}

/// Friedman Aligned Ranks statistic
///
/// ```text
/// T = (G−1)[Σ_j C_j² − (G D²/4)(GD+1)²] / {GD(GD+1)(2GD+1)/6 − (1/G) Σ_i R_i²}
/// ```
///
/// with `C_j` the column (algorithm) rank sums and `R_i` the row (dataset)
/// rank sums.
pub fn friedman_aligned_statistic(r: &RankTable) -> Result<f64> {
    let g = r.algorithms() as f64;
    let d = r.datasets() as f64;
    let gd = g * d;
    let col_sq: f64 = r.col_sums.iter().map(|c| c * c).sum();
    let row_sq: f64 = r.row_sums.iter().map(|c| c * c).sum();
    let numerator = (g - 1.0) * (col_sq - (g * d * d / 4.0) * (gd + 1.0).powi(2));
    let denominator = gd * (gd + 1.0) * (2.0 * gd + 1.0) / 6.0 - row_sq / g;
    if denominator.abs() <= 1e-12 * gd.powi(3) {
        return Err(Error::Degenerate(
            "Friedman aligned denominator is zero".into(),
        ));
    }
    Ok(numerator / denominator)
}

/// Upper tail `P(X ≥ t)` of a chi-square distribution with `df` degrees of
/// freedom.
pub fn chi_square_sf(t: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::InvalidArgument("degrees of freedom must be >= 1".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chi-square statistic must be >= 0, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sf(t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanResult {
    #[serde(rename = "T")]
    pub t: f64,
    pub df: usize,
    pub p_one_tailed: f64,
    /// Twice the one-tailed value, capped at 1.
    pub p_two_tailed: f64,
}

pub fn friedman_test(r: &RankTable) -> Result<FriedmanResult> {
    let t = friedman_aligned_statistic(r)?;
    let df = r.algorithms() - 1;
    let p = chi_square_sf(t.max(0.0), df)?;
    Ok(FriedmanResult {
        t,
        df,
        p_one_tailed: p,
        p_two_tailed: (2.0 * p).min(1.0),
    })
}
