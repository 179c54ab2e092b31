use ndarray::{Array2, ArrayView2};

use super::{jacobi, kmeans, median, pairwise_squared, ClusteringResult};
use crate::error::{Error, Result};

const EMBEDDING_RESTARTS: usize = 10;

/// `D^{-1/2} A D^{-1/2}` for the Gaussian affinity `A_ij = exp(−‖x_i−x_j‖²/2s²)`
/// with zero diagonal and `s` the median pairwise distance.
pub fn normalized_affinity(data: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "spectral clustering needs at least two instances".into(),
        ));
    }
    let sq = pairwise_squared(data);
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| sq[[i, j]].sqrt())
        .collect();
    let mut width = median(&mut dists);
    if width == 0.0 {
        let nonzero: Vec<f64> = dists.iter().copied().filter(|&d| d > 0.0).collect();
        if nonzero.is_empty() {
            return Err(Error::Degenerate("all instances are identical".into()));
        }
        width = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
    }

    let denom = 2.0 * width * width;
    let mut affinity = sq.mapv(|d| (-d / denom).exp());
    affinity.diag_mut().fill(0.0);
    let degree: Vec<f64> = affinity.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(i) = degree.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedPoint(i));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    for ((i, j), a) in affinity.indexed_iter_mut() {
        *a *= inv_sqrt[i] * inv_sqrt[j];
    }
    Ok(affinity)
}

/// Rows of the top-`k` eigenvector matrix of the normalized affinity, each
/// scaled to unit length.
pub fn spectral_embedding(data: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let l = normalized_affinity(data)?;
    let eig = jacobi::symmetric_eigen(&l)?;
    let mut embedding = eig.vectors.slice(ndarray::s![.., ..k]).to_owned();
    for mut row in embedding.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(embedding)
}

pub fn spectral(data: ArrayView2<f64>, k: usize, seed: u64) -> Result<ClusteringResult> {
    let n = data.nrows();
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "spectral clustering needs 2 <= k <= n, got k={k} for n={n}"
        )));
    }
    let embedding = spectral_embedding(data, k)?;
    kmeans(embedding.view(), k, EMBEDDING_RESTARTS, seed)
}
