//! Affinity propagation by damped responsibility/availability message passing.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{median, pairwise_squared, ClusteringResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    Median,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub damping: f64,
    pub max_iterations: usize,
    pub convergence_window: usize,
    pub preference: Preference,
}

impl Default for ApConfig {
    fn default() -> Self {
        ApConfig {
            damping: 0.9,
            max_iterations: 200,
            convergence_window: 15,
            preference: Preference::Median,
        }
    }
}

impl ApConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "damping must lie in [0.5, 1), got {}",
                self.damping
            )));
        }
        if self.max_iterations == 0 || self.convergence_window == 0 {
            return Err(Error::Config(
                "max_iterations and convergence_window must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ApFit {
    pub result: ClusteringResult,
    /// Exemplar instance of each cluster id, ascending.
    pub exemplars: Vec<usize>,
}

fn assign_to_exemplars(s: &Array2<f64>, exemplars: &[usize], converged: bool, iterations: usize) -> ApFit {
    let n = s.nrows();
    let assignments = (0..n)
        .map(|i| {
            if let Ok(pos) = exemplars.binary_search(&i) {
                return pos;
            }
            let mut best = 0;
            for (c, &e) in exemplars.iter().enumerate() {
                if s[[i, e]] > s[[i, exemplars[best]]] {
                    best = c;
                }
            }
            best
        })
        .collect();
    ApFit {
        result: ClusteringResult {
            assignments,
            k: exemplars.len(),
            converged,
            iterations,
        },
        exemplars: exemplars.to_vec(),
    }
}

pub fn affinity_propagation_fit(data: ArrayView2<f64>, cfg: &ApConfig) -> Result<ApFit> {
    cfg.validate()?;
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "affinity propagation needs at least two instances".into(),
        ));
    }
    let mut s = pairwise_squared(data).mapv(|d| -d);
    let mut off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| s[[i, j]])
        .collect();
    let preference = match cfg.preference {
        Preference::Median => median(&mut off),
        Preference::Value(v) => v,
    };
    s.diag_mut().fill(preference);

    // Message passing has no unique fixed point when every similarity and
    // preference is equal: one cluster if the preference does not exceed the
    // similarities, singletons otherwise.
    let first_off = s[[0, 1]];
    let all_equal = (0..n).all(|i| (0..n).all(|j| i == j || s[[i, j]] == first_off));
    if all_equal {
        let exemplars: Vec<usize> = if preference > first_off {
            (0..n).collect()
        } else {
            vec![0]
        };
        return Ok(assign_to_exemplars(&s, &exemplars, true, 0));
    }

    let lambda = cfg.damping;
    let mut r = Array2::<f64>::zeros((n, n));
    let mut a = Array2::<f64>::zeros((n, n));
    let mut exemplars: Vec<usize> = Vec::new();
    let mut stable = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;

        // r(i,k) ← s(i,k) − max_{k'≠k} [a(i,k') + s(i,k')]
        for i in 0..n {
            let (mut first, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
            for k in 0..n {
                let v = a[[i, k]] + s[[i, k]];
                if v > first {
                    second = first;
                    first = v;
                    arg = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == arg { second } else { first };
                let fresh = s[[i, k]] - competitor;
                r[[i, k]] = lambda * r[[i, k]] + (1.0 - lambda) * fresh;
            }
        }

        // a(i,k) ← min(0, r(k,k) + Σ_{i'∉{i,k}} max(0, r(i',k)));
        // a(k,k) ← Σ_{i'≠k} max(0, r(i',k))
        for k in 0..n {
            let positive: f64 = (0..n)
                .filter(|&i| i != k)
                .map(|i| r[[i, k]].max(0.0))
                .sum();
            for i in 0..n {
                let fresh = if i == k {
                    positive
                } else {
                    (r[[k, k]] + positive - r[[i, k]].max(0.0)).min(0.0)
                };
                a[[i, k]] = lambda * a[[i, k]] + (1.0 - lambda) * fresh;
            }
        }

        let current: Vec<usize> = (0..n).filter(|&k| a[[k, k]] + r[[k, k]] > 0.0).collect();
        if current == exemplars {
            stable += 1;
        } else {
            stable = 1;
            exemplars = current;
        }
        if stable >= cfg.convergence_window && !exemplars.is_empty() {
            converged = true;
            break;
        }
    }

    if exemplars.is_empty() {
        // no positive self-evidence: fall back to the strongest candidate
        let mut best = 0;
        for k in 1..n {
            if a[[k, k]] + r[[k, k]] > a[[best, best]] + r[[best, best]] {
                best = k;
            }
        }
        exemplars = vec![best];
        converged = false;
    }
    Ok(assign_to_exemplars(&s, &exemplars, converged, iterations))
}

/// `k` is the number of exemplars found; non-convergence is reported through
/// `converged = false`.
pub fn affinity_propagation(data: ArrayView2<f64>, cfg: &ApConfig) -> Result<ClusteringResult> {
    affinity_propagation_fit(data, cfg).map(|f| f.result)
}
