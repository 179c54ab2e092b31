//! Clustering algorithms applied to raw or learned features.

mod affinity;
mod jacobi;
mod kmeans;
mod spectral;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use affinity::{affinity_propagation, affinity_propagation_fit, ApConfig, ApFit, Preference};
pub use jacobi::{symmetric_eigen, SymmetricEigen};
pub use kmeans::{cop_kmeans, kmeans, kmeans_fit, KMeansFit};
pub use spectral::{normalized_affinity, spectral, spectral_embedding};

/// Assignment of each instance to one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub k: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl ClusteringResult {
    /// Relabels cluster ids densely in order of first appearance.
    pub fn compacted(assignments: &[usize], converged: bool, iterations: usize) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignments: Vec<usize> = assignments
            .iter()
            .map(|&c| {
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
            .collect();
        ClusteringResult {
            k: map.len().max(1),
            assignments,
            converged,
            iterations,
        }
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }
}

pub(crate) fn squared_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Full `n × n` matrix of squared Euclidean distances.
pub(crate) fn pairwise_squared(data: ArrayView2<f64>) -> ndarray::Array2<f64> {
    let n = data.nrows();
    let mut out = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_distance(data.row(i), data.row(j));
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Median with the midpoint convention for even counts. Sorts in place.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compaction_is_first_appearance() {
        let r = ClusteringResult::compacted(&[4, 4, 1, 7, 1], true, 3);
        assert_eq!(r.assignments, vec![0, 0, 1, 2, 1]);
        assert_eq!(r.k, 3);
        assert_eq!(r.cluster_sizes(), vec![2, 2, 1]);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
