use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::{squared_distance, ClusteringResult};
use crate::data::ConstraintSet;
use crate::error::{Error, Result};
use crate::rng;

const MAX_ITERATIONS: usize = 300;

/// A fitted K-means model. `wcss_history` holds the within-cluster sum of
/// squares after every assignment step of the winning run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub result: ClusteringResult,
    pub centroids: Array2<f64>,
    pub wcss: f64,
    pub wcss_history: Vec<f64>,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= n, got k={k} for n={n}"
        )));
    }
    Ok(())
}

/// k-means++ seeding.
fn seed_centroids<R: Rng + ?Sized>(data: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i), data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against rounding leaving `chosen` on a zero-weight point
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(data.row(i), data.row(pick)));
        }
    }
    centroids
}

/// Cluster indices ordered by distance to `x`, ties by lowest index.
fn ranked_clusters(x: ndarray::ArrayView1<f64>, centroids: &Array2<f64>) -> Vec<(f64, usize)> {
    let mut ranked: Vec<(f64, usize)> = centroids
        .rows()
        .into_iter()
        .enumerate()
        .map(|(c, row)| (squared_distance(x, row), c))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked
}

fn nearest_assignment(data: ArrayView2<f64>, centroids: &Array2<f64>) -> Result<Vec<usize>> {
    Ok(data
        .rows()
        .into_iter()
        .map(|x| {
            let mut best = (f64::INFINITY, 0);
            for (c, row) in centroids.rows().into_iter().enumerate() {
                let d = squared_distance(x, row);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect())
}

fn wcss(data: ArrayView2<f64>, centroids: &Array2<f64>, assignments: &[usize]) -> f64 {
    data.rows()
        .into_iter()
        .zip(assignments)
        .map(|(x, &c)| squared_distance(x, centroids.row(c)))
        .sum()
}

/// Recomputes centroids as means. An empty cluster's centroid moves to the
/// point farthest from its own centroid. Returns whether any reseed happened.
fn update_centroids(
    data: ArrayView2<f64>,
    centroids: &mut Array2<f64>,
    assignments: &[usize],
) -> bool {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    let mut counts = vec![0usize; k];
    for (x, &c) in data.rows().into_iter().zip(assignments) {
        sums.row_mut(c).scaled_add(1.0, &x);
        counts[c] += 1;
    }
    let mut dist: Vec<f64> = data
        .rows()
        .into_iter()
        .zip(assignments)
        .map(|(x, &c)| squared_distance(x, centroids.row(c)))
        .collect();
    let mut reseeded = false;
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        } else {
            let mut far = 0;
            for (i, &d) in dist.iter().enumerate() {
                if d > dist[far] {
                    far = i;
                }
            }
            centroids.row_mut(c).assign(&data.row(far));
            dist[far] = 0.0;
            reseeded = true;
        }
    }
    reseeded
}

struct LloydRun {
    assignments: Vec<usize>,
    centroids: Array2<f64>,
    wcss_history: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn lloyd<R, A>(data: ArrayView2<f64>, k: usize, rng: &mut R, mut assign: A) -> Result<LloydRun>
where
    R: Rng + ?Sized,
    A: FnMut(ArrayView2<f64>, &Array2<f64>) -> Result<Vec<usize>>,
{
    let mut centroids = seed_centroids(data, k, rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut reseeded = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let next = assign(data, &centroids)?;
        history.push(wcss(data, &centroids, &next));
        if next == assignments && !reseeded {
            converged = true;
            break;
        }
        assignments = next;
        reseeded = update_centroids(data, &mut centroids, &assignments);
    }
    Ok(LloydRun {
        assignments,
        centroids,
        wcss_history: history,
        converged,
        iterations,
    })
}

fn finish(data: ArrayView2<f64>, run: LloydRun) -> KMeansFit {
    let wcss = wcss(data, &run.centroids, &run.assignments);
    KMeansFit {
        result: ClusteringResult::compacted(&run.assignments, run.converged, run.iterations),
        centroids: run.centroids,
        wcss,
        wcss_history: run.wcss_history,
    }
}

/// Lloyd iterations from k-means++ seeding; the best of `restarts` runs by
/// within-cluster sum of squares is returned.
pub fn kmeans_fit(data: ArrayView2<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    check_k(data.nrows(), k)?;
    let mut rng = rng::seeded(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(data, k, &mut rng, |d, c| nearest_assignment(d, c))?;
        let fit = finish(data, run);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans(data: ArrayView2<f64>, k: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    kmeans_fit(data, k, restarts, seed).map(|f| f.result)
}

/// Constrained K-means: instances are assigned in index order to the nearest
/// centroid that violates none of their must-link or cannot-link pairs given
/// the assignments made so far in the same pass.
pub fn cop_kmeans(
    data: ArrayView2<f64>,
    k: usize,
    constraints: &ConstraintSet,
    seed: u64,
) -> Result<ClusteringResult> {
    let n = data.nrows();
    check_k(n, k)?;
    constraints.check_indices(n)?;
    let mut must = vec![Vec::new(); n];
    let mut cannot = vec![Vec::new(); n];
    for &(a, b) in &constraints.must {
        must[a].push(b);
        must[b].push(a);
    }
    for &(a, b) in &constraints.cannot {
        cannot[a].push(b);
        cannot[b].push(a);
    }

    let assign = |data: ArrayView2<f64>, centroids: &Array2<f64>| -> Result<Vec<usize>> {
        let mut out: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            let feasible = |c: usize| {
                must[i].iter().all(|&j| out[j].is_none_or(|cj| cj == c))
                    && cannot[i].iter().all(|&j| out[j] != Some(c))
            };
            let choice = ranked_clusters(data.row(i), centroids)
                .into_iter()
                .map(|(_, c)| c)
                .find(|&c| feasible(c))
                .ok_or(Error::Infeasible { instance: i })?;
            out[i] = Some(choice);
        }
        Ok(out.into_iter().map(|c| c.expect("all assigned")).collect())
    };
    let mut rng = rng::seeded(seed);
    let run = lloyd(data, k, &mut rng, assign)?;
    Ok(finish(data, run).result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use ndarray::array;

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        a.len() == b.len()
            && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let data = array![[0.0, 0.0], [1.0, 0.0], [0.0, 5.0], [3.0, 3.0]];
        let fit = kmeans_fit(data.view(), 4, 3, 1).unwrap();
        assert_eq!(fit.result.k, 4);
        assert_eq!(fit.wcss, 0.0);
    }

    #[test]
    fn k_one_gives_mean_centroid() {
        let data = array![[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]];
        let fit = kmeans_fit(data.view(), 1, 1, 1).unwrap();
        assert_eq!(fit.result.assignments, vec![0, 0, 0]);
        assert_eq!(fit.centroids.row(0), array![2.0, 2.0]);
    }

    #[test]
    fn rejects_k_above_n() {
        let data = array![[0.0], [1.0]];
        assert!(kmeans(data.view(), 3, 1, 0).is_err());
        assert!(kmeans(data.view(), 0, 1, 0).is_err());
    }

    #[test]
    fn far_blobs_recovered() {
        let d = synth_blobs(60, 2, 3, 50.0, 3).unwrap();
        let r = kmeans(d.features.view(), 2, 5, 9).unwrap();
        assert!(same_partition(&r.assignments, d.labels.as_ref().unwrap()));
        assert!(r.converged);
    }

    #[test]
    fn wcss_never_increases() {
        for seed in 0..10 {
            let d = synth_blobs(90, 4, 3, 2.0, seed).unwrap();
            let fit = kmeans_fit(d.features.view(), 4, 1, seed).unwrap();
            for w in fit.wcss_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.wcss_history);
            }
        }
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let data = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [5.0, 5.0]];
        let r = kmeans(data.view(), 3, 2, 4).unwrap();
        assert_eq!(r.assignments.len(), 4);
        assert!(r.k <= 3);
    }

    #[test]
    fn cop_without_constraints_matches_kmeans() {
        let d = synth_blobs(50, 3, 4, 3.0, 8).unwrap();
        for seed in 0..5 {
            let a = cop_kmeans(d.features.view(), 3, &ConstraintSet::empty(), seed).unwrap();
            let b = kmeans(d.features.view(), 3, 1, seed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cop_must_link_dominates_distance() {
        let d = synth_blobs(40, 2, 2, 30.0, 2).unwrap();
        // instance 0 is in blob 0, instance 39 in blob 1
        let c = ConstraintSet::new([(0, 39)], []).unwrap();
        let r = cop_kmeans(d.features.view(), 2, &c, 1).unwrap();
        assert_eq!(r.assignments[0], r.assignments[39]);
    }

    #[test]
    fn cop_triangle_is_infeasible() {
        let data = array![[0.0], [0.1], [0.2], [9.0]];
        let c = ConstraintSet::new([(0, 1), (1, 2)], [(0, 2)]).unwrap();
        let err = cop_kmeans(data.view(), 2, &c, 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { instance: 2 }));
    }
}
