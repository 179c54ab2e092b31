//! Pairwise-constrained GRBM.
//!
//! Training adds, to the CD-1 weight update, the gradients of two penalties on
//! noise-free reconstructions `v⁽¹⁾ = h Wᵀ + a`:
//!
//! ```text
//! J_M(W) = 1/N_M Σ_{(s,t) ∈ M} ‖(h_s − h_t) Wᵀ‖²
//! J_C(W) = 1/N_C Σ_{(s,t) ∈ C} ‖(h_s − h_t) Wᵀ‖²
//! ```
//!
//! With `d = h_s − h_t`, `∂‖d Wᵀ‖²/∂w_ij = 2 (W dᵀ)_i d_j`, so each gradient is
//! a mean of rank-one outer products. Hidden vectors are treated as constants
//! of `W`. Biases get no constraint term because neither penalty depends on
//! them.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{ConstraintSet, Dataset, Pair};
use crate::error::{Error, Result};
use crate::grbm::{self, CdStats, GrbmParams, TrainConfig};

pub const DEFAULT_LAMBDA: f64 = 0.7;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// How the constraint gradient enters the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    /// `W += λε(pos − neg) + (1−λ)(F_M − F_C)`, exactly as published.
    PaperExact,
    /// `W += λε(pos − neg) − (1−λ)·rate·(F_M − F_C)`: a gradient-descent step
    /// on the penalty, shrinking must-link and stretching cannot-link
    /// reconstruction distances.
    Descent,
}

impl std::fmt::Display for SignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignMode::PaperExact => "paper-exact",
            SignMode::Descent => "descent",
        })
    }
}

impl std::str::FromStr for SignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-exact" | "paper_exact" => Ok(SignMode::PaperExact),
            "descent" => Ok(SignMode::Descent),
            other => Err(Error::InvalidArgument(format!("unknown sign mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcgrbmConfig {
    pub base: TrainConfig,
    /// Weight of the likelihood term, in `(0, 1)`.
    pub lambda: f64,
    pub sign_mode: SignMode,
    /// Step size on the constraint gradient; only used in descent mode.
    pub constraint_rate: f64,
    /// Use sampled binary hidden states for constraint pairs instead of
    /// probabilities.
    pub use_sampled_hidden: bool,
}

impl PcgrbmConfig {
    pub fn new(base: TrainConfig) -> Self {
        PcgrbmConfig {
            base,
            lambda: DEFAULT_LAMBDA,
            sign_mode: SignMode::PaperExact,
            constraint_rate: 1.0,
            use_sampled_hidden: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.constraint_rate > 0.0 && self.constraint_rate.is_finite()) {
            return Err(Error::Config(format!(
                "constraint rate must be > 0, got {}",
                self.constraint_rate
            )));
        }
        Ok(())
    }
}

/// Hidden representations of the two endpoints of every constraint pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HiddenPairBatch {
    pub must_pairs: Vec<(Array1<f64>, Array1<f64>)>,
    pub cannot_pairs: Vec<(Array1<f64>, Array1<f64>)>,
}

impl HiddenPairBatch {
    /// Looks up rows of `hidden` (one per instance) for each pair.
    pub fn from_rows(hidden: ArrayView2<f64>, constraints: &ConstraintSet) -> Result<Self> {
        constraints.check_indices(hidden.nrows())?;
        let lookup = |pairs: &[Pair]| {
            pairs
                .iter()
                .map(|&(s, t)| (hidden.row(s).to_owned(), hidden.row(t).to_owned()))
                .collect()
        };
        Ok(HiddenPairBatch {
            must_pairs: lookup(&constraints.must),
            cannot_pairs: lookup(&constraints.cannot),
        })
    }

    fn check(&self, q: usize) -> Result<()> {
        let bad = self
            .must_pairs
            .iter()
            .chain(self.cannot_pairs.iter())
            .any(|(s, t)| s.len() != q || t.len() != q);
        if bad {
            Err(Error::Dimension(format!(
                "hidden pair vectors must have length {q}"
            )))
        } else {
            Ok(())
        }
    }
}

fn mean_squared_distance(weights: &Array2<f64>, pairs: &[(Array1<f64>, Array1<f64>)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|(s, t)| {
            let d = s - t;
            weights.dot(&d).mapv(|x| x * x).sum()
        })
        .sum();
    total / pairs.len() as f64
}

/// `(J_M, J_C)`; an empty side contributes 0.
pub fn pairwise_penalty(params: &GrbmParams, batch: &HiddenPairBatch) -> Result<(f64, f64)> {
    batch.check(params.hidden())?;
    Ok((
        mean_squared_distance(&params.weights, &batch.must_pairs),
        mean_squared_distance(&params.weights, &batch.cannot_pairs),
    ))
}

// (2/N) Σ (W dᵀ) ⊗ d, summed in pair order.
fn penalty_gradient(weights: &Array2<f64>, pairs: &[(Array1<f64>, Array1<f64>)]) -> Array2<f64> {
    let mut grad = Array2::zeros(weights.dim());
    if pairs.is_empty() {
        return grad;
    }
    for (s, t) in pairs {
        let d = s - t;
        let wd = weights.dot(&d);
        let outer = wd
            .view()
            .insert_axis(Axis(1))
            .dot(&d.view().insert_axis(Axis(0)));
        grad += &outer;
    }
    grad * (2.0 / pairs.len() as f64)
}

/// `(F_M, F_C)`: the `p × q` gradients of `J_M` and `J_C` with respect to `W`.
pub fn constraint_gradient(
    params: &GrbmParams,
    batch: &HiddenPairBatch,
) -> Result<(Array2<f64>, Array2<f64>)> {
    batch.check(params.hidden())?;
    Ok((
        penalty_gradient(&params.weights, &batch.must_pairs),
        penalty_gradient(&params.weights, &batch.cannot_pairs),
    ))
}

/// One pcGRBM parameter update. Biases follow plain CD-1 with rate `ε`.
pub fn combined_update(
    params: &GrbmParams,
    stats: &CdStats,
    f_must: &Array2<f64>,
    f_cannot: &Array2<f64>,
    cfg: &PcgrbmConfig,
) -> GrbmParams {
    let eps = cfg.base.epsilon;
    let mut next = grbm::apply_scaled_update(params, stats, cfg.lambda * eps, eps);
    let constraint_scale = match cfg.sign_mode {
        SignMode::PaperExact => 1.0 - cfg.lambda,
        SignMode::Descent => -(1.0 - cfg.lambda) * cfg.constraint_rate,
    };
    next.weights
        .scaled_add(constraint_scale, &(f_must - f_cannot));
    next
}

/// Training diagnostics for one epoch, all computed with hidden
/// probabilities on the full training set after the epoch's updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub j_must: f64,
    pub j_cannot: f64,
    pub recon_mse: f64,
    /// Mean `‖v_s⁽¹⁾ − v_t⁽¹⁾‖` over must-link pairs.
    pub must_distance: f64,
    /// Mean `‖v_s⁽¹⁾ − v_t⁽¹⁾‖` over cannot-link pairs.
    pub cannot_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyTrace {
    pub j_must: f64,
    pub j_cannot: f64,
    pub recon_mse: f64,
}

/// Penalties on current hidden probabilities plus reconstruction MSE (the
/// tractable stand-in for the likelihood term).
pub fn penalty_trace(
    params: &GrbmParams,
    d: &Dataset,
    constraints: &ConstraintSet,
) -> Result<PenaltyTrace> {
    if d.p() != params.visible() {
        return Err(Error::Dimension(format!(
            "dataset has {} features, model expects {}",
            d.p(),
            params.visible()
        )));
    }
    let hidden = grbm::hidden_prob_rows(params, d.features.view());
    let batch = HiddenPairBatch::from_rows(hidden.view(), constraints)?;
    let (j_must, j_cannot) = pairwise_penalty(params, &batch)?;
    Ok(PenaltyTrace {
        j_must,
        j_cannot,
        recon_mse: grbm::reconstruction_mse(params, d.features.view()),
    })
}

fn mean_distance(weights: &Array2<f64>, hidden: ArrayView2<f64>, pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|&(s, t)| {
            let d = &hidden.row(s) - &hidden.row(t);
            weights.dot(&d).mapv(|x| x * x).sum().sqrt()
        })
        .sum();
    total / pairs.len() as f64
}

/// Mean reconstructed-visible distances `(must, cannot)` using hidden
/// probabilities of `features`.
pub fn reconstruction_distances(
    params: &GrbmParams,
    features: ArrayView2<f64>,
    constraints: &ConstraintSet,
) -> Result<(f64, f64)> {
    constraints.check_indices(features.nrows())?;
    let hidden = grbm::hidden_prob_rows(params, features);
    Ok((
        mean_distance(&params.weights, hidden.view(), &constraints.must),
        mean_distance(&params.weights, hidden.view(), &constraints.cannot),
    ))
}

pub fn train_pcgrbm(
    d: &Dataset,
    constraints: &ConstraintSet,
    cfg: &PcgrbmConfig,
    q: usize,
) -> Result<GrbmParams> {
    train_pcgrbm_traced(d, constraints, cfg, q).map(|(params, _)| params)
}

/// Per-epoch state for scheduling constraint pairs across mini-batches: a
/// pair is used in the first batch after which both endpoints hold hidden
/// states computed during the current epoch. Every row is visited once per
/// epoch, so every pair is used exactly once per epoch.
struct PairScheduler {
    hidden: Array2<f64>,
    fresh_in: Vec<Option<usize>>,
    must_done: Vec<Option<usize>>,
    cannot_done: Vec<Option<usize>>,
}

impl PairScheduler {
    fn new(n: usize, q: usize, constraints: &ConstraintSet) -> Self {
        PairScheduler {
            hidden: Array2::zeros((n, q)),
            fresh_in: vec![None; n],
            must_done: vec![None; constraints.n_must()],
            cannot_done: vec![None; constraints.n_cannot()],
        }
    }

    fn record(&mut self, epoch: usize, rows: &[usize], hidden: ArrayView2<f64>) {
        for (&r, h) in rows.iter().zip(hidden.rows()) {
            self.hidden.row_mut(r).assign(&h);
            self.fresh_in[r] = Some(epoch);
        }
    }

    fn take_ready(&mut self, epoch: usize, constraints: &ConstraintSet) -> HiddenPairBatch {
        let fresh = &self.fresh_in;
        let hidden = &self.hidden;
        let collect = |pairs: &[Pair], done: &mut [Option<usize>]| {
            let mut out = Vec::new();
            for (k, &(s, t)) in pairs.iter().enumerate() {
                if done[k] != Some(epoch)
                    && fresh[s] == Some(epoch)
                    && fresh[t] == Some(epoch)
                {
                    done[k] = Some(epoch);
                    out.push((hidden.row(s).to_owned(), hidden.row(t).to_owned()));
                }
            }
            out
        };
        HiddenPairBatch {
            must_pairs: collect(&constraints.must, &mut self.must_done),
            cannot_pairs: collect(&constraints.cannot, &mut self.cannot_done),
        }
    }
}

/// Trains a pcGRBM and records an [`EpochTrace`] after every epoch.
pub fn train_pcgrbm_traced(
    d: &Dataset,
    constraints: &ConstraintSet,
    cfg: &PcgrbmConfig,
    q: usize,
) -> Result<(GrbmParams, Vec<EpochTrace>)> {
    cfg.validate()?;
    d.require_normalized()?;
    constraints.check_indices(d.n())?;

    let mut scheduler = PairScheduler::new(d.n(), q, constraints);
    let mut trace = Vec::with_capacity(cfg.base.epochs);
    let mut trace_err = None;

    let params = grbm::drive_training(
        d,
        &cfg.base,
        q,
        |params, ctx| {
            let hidden = if cfg.use_sampled_hidden {
                &ctx.pass.h0_sample
            } else {
                &ctx.pass.h0_prob
            };
            scheduler.record(ctx.epoch, ctx.rows, hidden.view());
            let batch = scheduler.take_ready(ctx.epoch, constraints);
            let (f_must, f_cannot) = constraint_gradient(params, &batch)?;
            Ok(combined_update(params, ctx.stats, &f_must, &f_cannot, cfg))
        },
        |epoch, params| match epoch_trace(epoch, params, d, constraints) {
            Ok(t) => trace.push(t),
            Err(e) => trace_err = Some(e),
        },
    )?;
    if let Some(e) = trace_err {
        return Err(e);
    }
    Ok((params, trace))
}

fn epoch_trace(
    epoch: usize,
    params: &GrbmParams,
    d: &Dataset,
    constraints: &ConstraintSet,
) -> Result<EpochTrace> {
    let pen = penalty_trace(params, d, constraints)?;
    let (must_distance, cannot_distance) =
        reconstruction_distances(params, d.features.view(), constraints)?;
    Ok(EpochTrace {
        epoch,
        j_must: pen.j_must,
        j_cannot: pen.j_cannot,
        recon_mse: pen.recon_mse,
        must_distance,
        cannot_distance,
    })
}

/// Squared reconstruction distance of one pair, `‖(h_s − h_t) Wᵀ‖²`.
pub fn pair_penalty(weights: &Array2<f64>, h_s: ArrayView1<f64>, h_t: ArrayView1<f64>) -> f64 {
    weights.dot(&(&h_s - &h_t)).mapv(|x| x * x).sum()
}
