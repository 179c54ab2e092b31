//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use ndarray::{Array1, Array2};

/// Best matched count over every injective cluster→label map, by
/// enumerating permutations of `0..max(k_pred, k_true)`.
pub fn brute_force_matches(labels: &[usize], assignments: &[usize]) -> usize {
    let k_true = labels.iter().max().map_or(0, |m| m + 1);
    let k_pred = assignments.iter().max().map_or(0, |m| m + 1);
    let m = k_true.max(k_pred);
    let mut best = 0;
    let mut perm: Vec<usize> = (0..m).collect();
    permutations(&mut perm, 0, &mut |map| {
        let hits = labels
            .iter()
            .zip(assignments)
            .filter(|(&l, &c)| map[c] == l)
            .count();
        best = best.max(hits);
    });
    best
}

fn permutations(items: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permutations(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// `Σ_i (n_i/n) · max_j n_i^j / n_i` evaluated term by term.
pub fn direct_purity(labels: &[usize], assignments: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| assignments[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let n_i = members.len() as f64;
        let dominant = (0..classes)
            .map(|l| members.iter().filter(|&&i| labels[i] == l).count())
            .max()
            .unwrap_or(0) as f64;
        total += (n_i / n) * (dominant / n_i);
    }
    total
}

pub type PairList = Vec<(Array1<f64>, Array1<f64>)>;

/// `1/N Σ ‖(h_s − h_t) Wᵀ‖²` by explicit loops.
pub fn penalty(w: &Array2<f64>, pairs: &PairList) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let (p, q) = w.dim();
    let mut total = 0.0;
    for (s, t) in pairs {
        for i in 0..p {
            let mut v = 0.0;
            for j in 0..q {
                v += (s[j] - t[j]) * w[[i, j]];
            }
            total += v * v;
        }
    }
    total / pairs.len() as f64
}

/// Central finite differences of [`penalty`] in every weight.
pub fn finite_difference_gradient(w: &Array2<f64>, pairs: &PairList, h: f64) -> Array2<f64> {
    let mut grad = Array2::zeros(w.dim());
    for ((i, j), g) in grad.indexed_iter_mut() {
        let mut plus = w.clone();
        plus[[i, j]] += h;
        let mut minus = w.clone();
        minus[[i, j]] -= h;
        *g = (penalty(&plus, pairs) - penalty(&minus, pairs)) / (2.0 * h);
    }
    grad
}

/// `∂J/∂w_ij = 2/N Σ_pairs (Σ_l w_il d_l) d_j` entry by entry.
pub fn elementwise_gradient(w: &Array2<f64>, pairs: &PairList) -> Array2<f64> {
    let (p, q) = w.dim();
    let mut grad = Array2::zeros((p, q));
    if pairs.is_empty() {
        return grad;
    }
    for i in 0..p {
        for j in 0..q {
            let mut g = 0.0;
            for (s, t) in pairs {
                let mut row = 0.0;
                for l in 0..q {
                    row += w[[i, l]] * (s[l] - t[l]);
                }
                g += row * (s[j] - t[j]);
            }
            grad[[i, j]] = 2.0 * g / pairs.len() as f64;
        }
    }
    grad
}

/// Upper tail of the chi-square distribution by composite Simpson
/// integration of the density. Substituting `x = u²` gives the smooth
/// integrand `2u f(u²)`, which has no singularity at 0 for any `df`.
pub fn chi_square_sf_by_quadrature(t: f64, df: usize) -> f64 {
    let k = df as f64 / 2.0;
    let ln_norm = -(k * std::f64::consts::LN_2 + ln_gamma(k));
    let integrand = |u: f64| {
        if u <= 0.0 {
            return if df == 1 { 2.0 * ln_norm.exp() } else { 0.0 };
        }
        2.0 * (ln_norm + (df as f64 - 1.0) * u.ln() - u * u / 2.0).exp()
    };
    let upper = t.sqrt();
    let steps = 200_000;
    let h = upper / steps as f64;
    let mut sum = integrand(0.0) + integrand(upper);
    for i in 1..steps {
        sum += integrand(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - sum * h / 3.0
}

/// Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
