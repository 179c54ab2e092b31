//! Gaussian-visible, binary-hidden RBM.
//!
//! Energy: `E(v,h) = Σ_i (v_i − a_i)²/2σ_i² − Σ_j b_j h_j − Σ_ij (v_i/σ_i) h_j w_ij`.
//! Visible units are reconstructed noise-free as `a + h Wᵀ`; training is
//! one-step contrastive divergence.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct GrbmParams {
    /// `p × q` connection weights.
    pub weights: Array2<f64>,
    /// Length `p`.
    pub visible_bias: Array1<f64>,
    /// Length `q`.
    pub hidden_bias: Array1<f64>,
    /// Length `p` visible noise scales, all positive.
    pub sigma: Array1<f64>,
}

impl GrbmParams {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        sigma: Array1<f64>,
    ) -> Result<Self> {
        let (p, q) = weights.dim();
        if p == 0 || q == 0 {
            return Err(Error::Dimension(format!("empty weight matrix {p}x{q}")));
        }
        if visible_bias.len() != p || sigma.len() != p || hidden_bias.len() != q {
            return Err(Error::Dimension(format!(
                "W is {p}x{q} but a={}, b={}, sigma={}",
                visible_bias.len(),
                hidden_bias.len(),
                sigma.len()
            )));
        }
        let all = weights
            .iter()
            .chain(visible_bias.iter())
            .chain(hidden_bias.iter())
            .chain(sigma.iter());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        if sigma.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidArgument("sigma entries must be > 0".into()));
        }
        Ok(GrbmParams {
            weights,
            visible_bias,
            hidden_bias,
            sigma,
        })
    }

    /// All-zero weights and biases, unit sigma.
    pub fn zeros(p: usize, q: usize) -> Self {
        GrbmParams {
            weights: Array2::zeros((p, q)),
            visible_bias: Array1::zeros(p),
            hidden_bias: Array1::zeros(q),
            sigma: Array1::ones(p),
        }
    }

    /// Weights i.i.d. `N(0, 0.01²)`, zero biases, unit sigma.
    pub fn init<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid normal");
        let mut params = Self::zeros(p, q);
        params
            .weights
            .iter_mut()
            .for_each(|w| *w = normal.sample(rng));
        params
    }

    pub fn visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.weights.ncols()
    }

    fn check_visible(&self, len: usize) -> Result<()> {
        if len == self.visible() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "visible vector has length {len}, model expects {}",
                self.visible()
            )))
        }
    }

    fn check_hidden(&self, len: usize) -> Result<()> {
        if len == self.hidden() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "hidden vector has length {len}, model expects {}",
                self.hidden()
            )))
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn energy(params: &GrbmParams, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
    params.check_visible(v.len())?;
    params.check_hidden(h.len())?;
    if h.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::InvalidArgument("hidden state must be binary".into()));
    }
    let scaled: Array1<f64> = &v / &params.sigma;
    let quadratic: f64 = v
        .iter()
        .zip(params.visible_bias.iter())
        .zip(params.sigma.iter())
        .map(|((vi, ai), si)| (vi - ai).powi(2) / (2.0 * si * si))
        .sum();
    let hidden_term = params.hidden_bias.dot(&h);
    let cross = scaled.dot(&params.weights.dot(&h));
    Ok(quadratic - hidden_term - cross)
}

/// `p(h_j = 1 | v) = logistic(b_j + Σ_i (v_i/σ_i) w_ij)`.
pub fn hidden_prob(params: &GrbmParams, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    params.check_visible(v.len())?;
    let mut out = Array1::zeros(params.hidden());
    hidden_prob_into(params, v, out.view_mut());
    Ok(out)
}

// Accumulates row by row in a fixed order so a batched call and a single-row
// call give bit-identical results.
fn hidden_prob_into(params: &GrbmParams, v: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) {
    out.assign(&params.hidden_bias);
    for ((vi, si), w_row) in v.iter().zip(params.sigma.iter()).zip(params.weights.rows()) {
        out.scaled_add(vi / si, &w_row);
    }
    out.mapv_inplace(logistic);
}

/// Row-wise `hidden_prob` over a batch; dimensions are the caller's concern.
pub(crate) fn hidden_prob_rows(params: &GrbmParams, v: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((v.nrows(), params.hidden()));
    for (row, out_row) in v.rows().into_iter().zip(out.rows_mut()) {
        hidden_prob_into(params, row, out_row);
    }
    out
}

/// Independent Bernoulli draws, one uniform per entry in order.
pub fn sample_hidden<R: Rng + ?Sized>(probs: ArrayView1<f64>, rng: &mut R) -> Result<Array1<f64>> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(probs.mapv(|p| bernoulli(p, rng)))
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// Noise-free visible reconstruction `a + h Wᵀ`.
pub fn reconstruct_visible(params: &GrbmParams, h: ArrayView1<f64>) -> Result<Array1<f64>> {
    params.check_hidden(h.len())?;
    let mut out = Array1::zeros(params.visible());
    reconstruct_into(params, h, out.view_mut());
    Ok(out)
}

fn reconstruct_into(params: &GrbmParams, h: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) {
    out.assign(&params.visible_bias);
    for (hj, w_col) in h.iter().zip(params.weights.columns()) {
        if *hj != 0.0 {
            out.scaled_add(*hj, &w_col);
        }
    }
}

pub(crate) fn reconstruct_rows(params: &GrbmParams, h: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((h.nrows(), params.visible()));
    for (row, out_row) in h.rows().into_iter().zip(out.rows_mut()) {
        reconstruct_into(params, row, out_row);
    }
    out
}

/// Batch averages of data-phase and reconstruction-phase statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CdStats {
    pub pos_assoc: Array2<f64>,
    pub neg_assoc: Array2<f64>,
    pub pos_v: Array1<f64>,
    pub neg_v: Array1<f64>,
    pub pos_h: Array1<f64>,
    pub neg_h: Array1<f64>,
    pub batch_size: usize,
}

/// One Gibbs half-chain over a batch, kept so constraint terms can reuse
/// the data-phase hidden states.
#[derive(Debug, Clone)]
pub(crate) struct GibbsPass {
    pub h0_prob: Array2<f64>,
    pub h0_sample: Array2<f64>,
    pub v1: Array2<f64>,
    pub h1_prob: Array2<f64>,
}

pub(crate) fn gibbs_pass<R: Rng + ?Sized>(
    params: &GrbmParams,
    v0: ArrayView2<f64>,
    rng: &mut R,
) -> GibbsPass {
    let h0_prob = hidden_prob_rows(params, v0);
    let h0_sample = h0_prob.mapv(|p| bernoulli(p, rng));
    let v1 = reconstruct_rows(params, h0_sample.view());
    let h1_prob = hidden_prob_rows(params, v1.view());
    GibbsPass {
        h0_prob,
        h0_sample,
        v1,
        h1_prob,
    }
}

pub(crate) fn stats_from_pass(v0: ArrayView2<f64>, pass: &GibbsPass) -> CdStats {
    let m = v0.nrows() as f64;
    CdStats {
        pos_assoc: v0.t().dot(&pass.h0_prob) / m,
        neg_assoc: pass.v1.t().dot(&pass.h1_prob) / m,
        pos_v: v0.sum_axis(Axis(0)) / m,
        neg_v: pass.v1.sum_axis(Axis(0)) / m,
        pos_h: pass.h0_prob.sum_axis(Axis(0)) / m,
        neg_h: pass.h1_prob.sum_axis(Axis(0)) / m,
        batch_size: v0.nrows(),
    }
}

fn check_batch(params: &GrbmParams, batch: ArrayView2<f64>) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    params.check_visible(batch.ncols())
}

/// CD-1 statistics. Associations use hidden probabilities on both phases;
/// the sampled data-phase state only drives the reconstruction.
pub fn cd1_step<R: Rng + ?Sized>(
    params: &GrbmParams,
    batch: ArrayView2<f64>,
    rng: &mut R,
) -> Result<CdStats> {
    check_batch(params, batch)?;
    let pass = gibbs_pass(params, batch, rng);
    Ok(stats_from_pass(batch, &pass))
}

/// `W += ε(pos − neg)`, same for both biases; sigma untouched.
pub fn apply_cd_update(params: &GrbmParams, stats: &CdStats, epsilon: f64) -> GrbmParams {
    apply_scaled_update(params, stats, epsilon, epsilon)
}

pub(crate) fn apply_scaled_update(
    params: &GrbmParams,
    stats: &CdStats,
    weight_rate: f64,
    bias_rate: f64,
) -> GrbmParams {
    let mut next = params.clone();
    next.weights
        .scaled_add(weight_rate, &(&stats.pos_assoc - &stats.neg_assoc));
    next.visible_bias
        .scaled_add(bias_rate, &(&stats.pos_v - &stats.neg_v));
    next.hidden_bias
        .scaled_add(bias_rate, &(&stats.pos_h - &stats.neg_h));
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchSize {
    Full,
    Mini(usize),
}

impl std::fmt::Display for BatchSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Mini(m) => write!(f, "{m}"),
        }
    }
}

impl std::str::FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(BatchSize::Full);
        }
        match s.parse::<usize>() {
            Ok(m) if m > 0 => Ok(BatchSize::Mini(m)),
            _ => Err(Error::InvalidArgument(format!("bad batch size {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epsilon: f64, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            epsilon,
            epochs,
            batch_size: BatchSize::Full,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything a training step sees for one batch.
pub(crate) struct BatchContext<'a> {
    pub epoch: usize,
    pub rows: &'a [usize],
    pub pass: &'a GibbsPass,
    pub stats: &'a CdStats,
}

/// Shared epoch/batch driver. `step` maps the current parameters and batch
/// context to the next parameters; `on_epoch` runs after every epoch.
pub(crate) fn drive_training<S, E>(
    d: &Dataset,
    cfg: &TrainConfig,
    q: usize,
    mut step: S,
    mut on_epoch: E,
) -> Result<GrbmParams>
where
    S: FnMut(&GrbmParams, &BatchContext<'_>) -> Result<GrbmParams>,
    E: FnMut(usize, &GrbmParams),
{
    d.require_normalized()?;
    cfg.validate()?;
    if q == 0 {
        return Err(Error::InvalidArgument("hidden width must be >= 1".into()));
    }
    let n = d.n();
    let mut rng = rng::seeded(cfg.seed);
    let mut params = GrbmParams::init(d.p(), q, &mut rng);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let chunk = match cfg.batch_size {
            BatchSize::Full => n,
            BatchSize::Mini(m) => {
                order.shuffle(&mut rng);
                m.min(n)
            }
        };
        for rows in order.chunks(chunk) {
            let v0 = if matches!(cfg.batch_size, BatchSize::Full) {
                d.features.clone()
            } else {
                d.features.select(Axis(0), rows)
            };
            let pass = gibbs_pass(&params, v0.view(), &mut rng);
            let stats = stats_from_pass(v0.view(), &pass);
            let ctx = BatchContext {
                epoch,
                rows,
                pass: &pass,
                stats: &stats,
            };
            params = step(&params, &ctx)?;
        }
        on_epoch(epoch, &params);
    }
    Ok(params)
}

pub fn train_grbm(d: &Dataset, cfg: &TrainConfig, q: usize) -> Result<GrbmParams> {
    train_grbm_traced(d, cfg, q).map(|(params, _)| params)
}

/// Like [`train_grbm`], also returning the reconstruction MSE after each
/// epoch.
pub fn train_grbm_traced(
    d: &Dataset,
    cfg: &TrainConfig,
    q: usize,
) -> Result<(GrbmParams, Vec<f64>)> {
    let mut trace = Vec::with_capacity(cfg.epochs);
    let params = drive_training(
        d,
        cfg,
        q,
        |params, ctx| Ok(apply_cd_update(params, ctx.stats, cfg.epsilon)),
        |_, params| trace.push(reconstruction_mse(params, d.features.view())),
    )?;
    Ok((params, trace))
}

/// Mean over rows of `‖v − (a + p(h|v) Wᵀ)‖² / p`, using probabilities.
pub fn reconstruction_mse(params: &GrbmParams, v: ArrayView2<f64>) -> f64 {
    let h = hidden_prob_rows(params, v);
    let recon = reconstruct_rows(params, h.view());
    let (n, p) = v.dim();
    (&v - &recon).mapv(|x| x * x).sum() / (n * p) as f64
}

/// Deterministic hidden features: row `i` is `hidden_prob` of row `i`.
pub fn extract_features(params: &GrbmParams, d: &Dataset) -> Result<Array2<f64>> {
    d.require_normalized()?;
    params.check_visible(d.p())?;
    Ok(hidden_prob_rows(params, d.features.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, synth_blobs};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest};

    fn random_params(p: usize, q: usize, seed: u64, scale: f64) -> GrbmParams {
        let mut rng = rng::seeded(seed);
        let mut params = GrbmParams::zeros(p, q);
        for x in params
            .weights
            .iter_mut()
            .chain(params.visible_bias.iter_mut())
            .chain(params.hidden_bias.iter_mut())
        {
            *x = scale * (rng.random::<f64>() * 2.0 - 1.0);
        }
        params
    }

    #[test]
    fn energy_vanishes_at_bias_with_zero_weights() {
        let mut params = GrbmParams::zeros(3, 2);
        params.visible_bias = array![0.5, -1.0, 2.0];
        let v = params.visible_bias.clone();
        for h in [array![0.0, 0.0], array![1.0, 0.0], array![1.0, 1.0]] {
            assert_eq!(energy(&params, v.view(), h.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn energy_single_unit() {
        let w = 0.3;
        let params = GrbmParams::new(array![[w]], array![0.0], array![0.0], array![1.0]).unwrap();
        let e = energy(&params, array![1.0].view(), array![1.0].view()).unwrap();
        assert_abs_diff_eq!(e, 0.5 - w, epsilon = 1e-15);
    }

    #[test]
    fn energy_with_hidden_off_is_quadratic() {
        let mut params = random_params(3, 2, 1, 1.0);
        params.sigma = array![1.0, 2.0, 0.5];
        let v = array![0.3, -1.2, 2.0];
        let expected: f64 = (0..3)
            .map(|i| (v[i] - params.visible_bias[i]).powi(2) / (2.0 * params.sigma[i].powi(2)))
            .sum();
        let e = energy(&params, v.view(), array![0.0, 0.0].view()).unwrap();
        assert_abs_diff_eq!(e, expected, epsilon = 1e-12);
    }

    #[test]
    fn energy_rejects_bad_input() {
        let params = GrbmParams::zeros(2, 2);
        assert!(energy(&params, array![1.0].view(), array![0.0, 1.0].view()).is_err());
        assert!(energy(&params, array![1.0, 1.0].view(), array![0.5, 1.0].view()).is_err());
    }

    #[test]
    fn hidden_prob_cases() {
        let params = GrbmParams::zeros(3, 4);
        let p = hidden_prob(&params, array![1.0, -2.0, 3.0].view()).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));

        let mut sat = GrbmParams::zeros(1, 1);
        sat.hidden_bias[0] = 20.0;
        let p = hidden_prob(&sat, array![0.0].view()).unwrap();
        assert!((1.0 - p[0]) < 1e-8);

        let one = GrbmParams::new(array![[1.0]], array![0.0], array![0.0], array![1.0]).unwrap();
        let p = hidden_prob(&one, array![1.0].view()).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.7311, epsilon = 1e-4);

        assert!(hidden_prob(&one, array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn sample_hidden_degenerate_and_mean() {
        let mut rng = rng::seeded(4);
        let zeros = sample_hidden(Array1::zeros(5).view(), &mut rng).unwrap();
        assert!(zeros.iter().all(|&x| x == 0.0));
        let ones = sample_hidden(Array1::ones(5).view(), &mut rng).unwrap();
        assert!(ones.iter().all(|&x| x == 1.0));
        let half = sample_hidden(Array1::from_elem(10_000, 0.5).view(), &mut rng).unwrap();
        assert!((half.mean().unwrap() - 0.5).abs() < 0.02);
        assert!(sample_hidden(array![1.5].view(), &mut rng).is_err());
    }

    #[test]
    fn reconstruct_cases() {
        let mut params = random_params(3, 2, 2, 1.0);
        let v = reconstruct_visible(&params, array![0.0, 0.0].view()).unwrap();
        assert_eq!(v, params.visible_bias);
        params.weights.fill(0.0);
        let v = reconstruct_visible(&params, array![1.0, 1.0].view()).unwrap();
        assert_eq!(v, params.visible_bias);

        let params =
            GrbmParams::new(array![[1.0], [2.0]], array![0.0, 0.0], array![0.0], array![1.0, 1.0])
                .unwrap();
        let v = reconstruct_visible(&params, array![1.0].view()).unwrap();
        assert_eq!(v, array![1.0, 2.0]);
    }

    #[test]
    fn cd1_zero_model_on_zero_rows() {
        let params = GrbmParams::zeros(2, 3);
        let stats = cd1_step(&params, Array2::zeros((4, 2)).view(), &mut rng::seeded(0)).unwrap();
        assert!(stats.pos_assoc.iter().all(|&x| x == 0.0));
        assert_eq!(stats.pos_assoc, stats.neg_assoc);
        assert_eq!(stats.pos_v, stats.neg_v);
        assert_eq!(stats.pos_h, stats.neg_h);
        assert_eq!(apply_cd_update(&params, &stats, 0.5), params);
    }

    #[test]
    fn cd1_fixed_point_gives_zero_update() {
        // W = 0: reconstruction is a and hidden probs are logistic(b) on both passes
        let mut params = GrbmParams::zeros(2, 2);
        params.visible_bias = array![0.4, -0.1];
        params.hidden_bias = array![0.3, -0.7];
        let batch = array![[0.4, -0.1], [0.4, -0.1]];
        let stats = cd1_step(&params, batch.view(), &mut rng::seeded(9)).unwrap();
        assert_eq!(stats.pos_assoc, stats.neg_assoc);
        assert_eq!(apply_cd_update(&params, &stats, 0.1), params);
    }

    #[test]
    fn cd1_matches_hand_trace() {
        let params = GrbmParams::new(array![[0.8]], array![0.2], array![-0.3], array![1.0]).unwrap();
        let batch = array![[1.5], [-0.5]];
        let stats = cd1_step(&params, batch.view(), &mut rng::seeded(77)).unwrap();

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut rng = rng::seeded(77);
        let (mut pa, mut na, mut pv, mut nv, mut ph, mut nh) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &v0 in &[1.5, -0.5] {
            let p0 = sig(-0.3 + v0 * 0.8);
            let h0 = if rng.random::<f64>() < p0 { 1.0 } else { 0.0 };
            let v1 = 0.2 + h0 * 0.8;
            let p1 = sig(-0.3 + v1 * 0.8);
            pa += v0 * p0 / 2.0;
            na += v1 * p1 / 2.0;
            pv += v0 / 2.0;
            nv += v1 / 2.0;
            ph += p0 / 2.0;
            nh += p1 / 2.0;
        }
        assert_abs_diff_eq!(stats.pos_assoc[[0, 0]], pa, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.neg_assoc[[0, 0]], na, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.pos_v[0], pv, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.neg_v[0], nv, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.pos_h[0], ph, epsilon = 1e-15);
        assert_abs_diff_eq!(stats.neg_h[0], nh, epsilon = 1e-15);
        assert_eq!(stats.batch_size, 2);
    }

    #[test]
    fn cd1_rejects_empty_batch() {
        let params = GrbmParams::zeros(2, 2);
        assert!(cd1_step(&params, Array2::zeros((0, 2)).view(), &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn apply_update_arithmetic() {
        let params = random_params(2, 2, 3, 1.0);
        let stats = CdStats {
            pos_assoc: Array2::ones((2, 2)),
            neg_assoc: Array2::zeros((2, 2)),
            pos_v: Array1::ones(2),
            neg_v: Array1::zeros(2),
            pos_h: Array1::zeros(2),
            neg_h: Array1::ones(2),
            batch_size: 1,
        };
        let next = apply_cd_update(&params, &stats, 0.1);
        for (a, b) in next.weights.iter().zip(params.weights.iter()) {
            assert_abs_diff_eq!(a - b, 0.1, epsilon = 1e-15);
        }
        for (a, b) in next.hidden_bias.iter().zip(params.hidden_bias.iter()) {
            assert_abs_diff_eq!(a - b, -0.1, epsilon = 1e-15);
        }
        assert_eq!(next.sigma, params.sigma);
        assert_eq!(apply_cd_update(&params, &stats, 0.0), params);
    }

    fn blobs() -> Dataset {
        normalize(&synth_blobs(120, 3, 6, 4.0, 5).unwrap())
    }

    #[test]
    fn train_requires_normalized() {
        let raw = synth_blobs(30, 3, 4, 4.0, 5).unwrap();
        let cfg = TrainConfig::new(0.01, 1, 0);
        assert!(matches!(
            train_grbm(&raw, &cfg, 4),
            Err(Error::NotNormalized(_))
        ));
        let mut bad = cfg.clone();
        bad.epochs = 0;
        assert!(train_grbm(&blobs(), &bad, 4).is_err());
    }

    #[test]
    fn zero_rate_returns_initialization() {
        let d = blobs();
        let cfg = TrainConfig::new(0.0, 1, 12);
        let trained = train_grbm(&d, &cfg, 5).unwrap();
        let init = GrbmParams::init(d.p(), 5, &mut rng::seeded(12));
        assert_eq!(trained, init);
    }

    #[test]
    fn training_reduces_reconstruction_error() {
        let d = blobs();
        let cfg = TrainConfig::new(0.05, 30, 3);
        let (params, trace) = train_grbm_traced(&d, &cfg, 8).unwrap();
        assert_eq!(trace.len(), 30);
        assert!(trace[29] < trace[0], "{trace:?}");
        assert_eq!(params, train_grbm(&d, &cfg, 8).unwrap());
    }

    #[test]
    fn minibatch_training_is_deterministic() {
        let d = blobs();
        let mut cfg = TrainConfig::new(0.05, 5, 3);
        cfg.batch_size = BatchSize::Mini(16);
        let a = train_grbm(&d, &cfg, 4).unwrap();
        assert_eq!(a, train_grbm(&d, &cfg, 4).unwrap());
        assert_ne!(a, train_grbm(&d, &TrainConfig::new(0.05, 5, 3), 4).unwrap());
    }

    #[test]
    fn extract_features_cases() {
        let d = blobs();
        let zero = GrbmParams::zeros(d.p(), 3);
        let f = extract_features(&zero, &d).unwrap();
        assert!(f.iter().all(|&x| x == 0.5));

        let params = random_params(d.p(), 3, 8, 0.5);
        let f = extract_features(&params, &d).unwrap();
        assert!(f.iter().all(|&x| x > 0.0 && x < 1.0));
        let row = hidden_prob(&params, d.features.row(7)).unwrap();
        assert_eq!(f.row(7), row);

        let one = d.select_rows(&[7]);
        assert_eq!(extract_features(&params, &one).unwrap().row(0), row);
        assert!(extract_features(&GrbmParams::zeros(2, 3), &d).is_err());
    }

    #[test]
    fn batch_size_parsing() {
        assert_eq!("full".parse::<BatchSize>().unwrap(), BatchSize::Full);
        assert_eq!("32".parse::<BatchSize>().unwrap(), BatchSize::Mini(32));
        assert!("0".parse::<BatchSize>().is_err());
    }

    proptest! {
        #[test]
        fn reconstruction_minimizes_energy(
            seed in any::<u64>(),
            delta in proptest::collection::vec(-1.0f64..1.0, 4),
            hbits in proptest::collection::vec(any::<bool>(), 3),
        ) {
            prop_assume!(delta.iter().any(|d| d.abs() > 1e-6));
            let params = random_params(4, 3, seed, 1.0);
            let h = Array1::from_iter(hbits.iter().map(|&b| if b { 1.0 } else { 0.0 }));
            let v_star = reconstruct_visible(&params, h.view()).unwrap();
            let moved = &v_star + &Array1::from(delta);
            let e_star = energy(&params, v_star.view(), h.view()).unwrap();
            let e_moved = energy(&params, moved.view(), h.view()).unwrap();
            prop_assert!(e_moved > e_star);
        }

        #[test]
        fn hidden_prob_monotone_in_bias(seed in any::<u64>(), j in 0usize..3, bump in 0.01f64..3.0) {
            let params = random_params(4, 3, seed, 1.0);
            let v = Array1::from(vec![0.3, -0.2, 1.1, 0.0]);
            let before = hidden_prob(&params, v.view()).unwrap();
            let mut bumped = params.clone();
            bumped.hidden_bias[j] += bump;
            let after = hidden_prob(&bumped, v.view()).unwrap();
            prop_assert!(after[j] > before[j]);
            for k in (0..3).filter(|&k| k != j) {
                prop_assert_eq!(after[k], before[k]);
            }
        }
    }
}
