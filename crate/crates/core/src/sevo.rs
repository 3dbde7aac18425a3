//! State evolution: the scalar recursion that predicts the per-iteration
//! effective noise variance and MSE of centralized AMP and lossy MP-AMP.
//!
//! With `MSE(v)` the Bayes MSE of the posterior-mean denoiser on the scalar
//! channel of noise variance `v`, the recursion is
//!
//! ```text
//! sigma_{t+1}^2 = sigma_z^2 + MSE(sigma_t^2 + P * D_t) / kappa,
//! sigma_1^2     = sigma_z^2 + E[X^2] / kappa,
//! ```
//!
//! where `D_t` is the per-node quantization distortion at iteration `t`
//! (zero for centralized AMP). The MMSE of the inference problem is the
//! MSE at the fixed point of the lossless (`D = 0`) recursion.

use dashmap::DashMap;

use crate::model::{Denoiser, Prior, ScalarChannelParams};
use crate::rd::RdModel;
use crate::{quad, Error, Result};

/// Static description of one multi-processor compressed-sensing setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    /// Signal prior.
    pub prior: Prior,
    /// Measurement rate `M / N`.
    pub kappa: f64,
    /// Measurement noise variance.
    pub sigma_z_sq: f64,
    /// Number of worker nodes `P`.
    pub nodes: usize,
}

impl ProblemParams {
    pub fn new(prior: Prior, kappa: f64, sigma_z_sq: f64, nodes: usize) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::domain(format!("kappa must be positive, got {kappa}")));
        }
        if !(sigma_z_sq >= 0.0) || !sigma_z_sq.is_finite() {
            return Err(Error::domain(format!(
                "sigma_z_sq must be nonnegative, got {sigma_z_sq}"
            )));
        }
        if nodes == 0 {
            return Err(Error::domain("node count must be at least 1"));
        }
        Ok(ProblemParams {
            prior,
            kappa,
            sigma_z_sq,
            nodes,
        })
    }

    /// `sigma_1^2 = sigma_z^2 + E[X^2] / kappa`, from the all-zero initial estimate.
    pub fn initial_sigma_sq(&self) -> f64 {
        self.sigma_z_sq + self.prior.second_moment() / self.kappa
    }
}

/// Bayes MSE of the posterior-mean denoiser on the scalar channel with noise
/// variance `sigma_eff_sq`, by deterministic quadrature over the two mixture
/// branches.
///
/// The inactive branch is `E[eta(W)^2]`; on the active branch the posterior
/// of `X` given `F = f` is Gaussian with mean `gain * f` and variance
/// `a * v / (a + v)`, which reduces the 2-D integral to a 1-D one.
pub fn mse_of_denoiser(prior: &Prior, sigma_eff_sq: f64) -> Result<f64> {
    if !(sigma_eff_sq > 0.0) || !sigma_eff_sq.is_finite() {
        return Err(Error::domain(format!(
            "sigma_eff_sq must be positive, got {sigma_eff_sq}"
        )));
    }
    let eps = prior.sparsity_rate();
    let a = prior.active_variance();
    let v = sigma_eff_sq;
    let den = Denoiser::new(prior, ScalarChannelParams::new(v)?)?;
    let gain = a / (a + v);
    let tol = quad::DEFAULT_TOL;
    let wrap = |e| match e {
        Error::Quadrature { achieved, target, .. } => Error::Quadrature {
            sigma_eff_sq: v,
            achieved,
            target,
        },
        other => other,
    };
    let inactive = quad::gaussian_expectation(0.0, v, tol, |w| {
        let eta = den.denoise(w);
        eta * eta
    })
    .map_err(wrap)?;
    let active_quad = quad::gaussian_expectation(0.0, a + v, tol, |f| {
        let diff = den.denoise(f) - gain * f;
        diff * diff
    })
    .map_err(wrap)?;
    let active = active_quad + a * v / (a + v);
    Ok((1.0 - eps) * inactive + eps * active)
}

/// One state-evolution step: `sigma_z^2 + MSE(sigma_sq + P * distortion) / kappa`.
/// `distortion = 0` recovers the centralized recursion.
pub fn se_step(sigma_sq: f64, distortion: f64, params: &ProblemParams) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::domain(format!("sigma_sq must be positive, got {sigma_sq}")));
    }
    if !(distortion >= 0.0) {
        return Err(Error::domain(format!(
            "distortion must be nonnegative, got {distortion}"
        )));
    }
    let eff = sigma_sq + params.nodes as f64 * distortion;
    Ok(params.sigma_z_sq + mse_of_denoiser(&params.prior, eff)? / params.kappa)
}

/// MMSE: the denoiser MSE at the fixed point of the lossless recursion,
/// iterated from `sigma_1^2` until successive iterates differ by less than
/// `tol`.
pub fn mmse(params: &ProblemParams, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let table = MseTable::new(params.prior);
    table.mmse(params, tol, max_iter)
}

/// Memoized denoiser-MSE evaluations for one prior.
///
/// The DP evaluates the same effective variances many times (its states and
/// rates live on grids, so the composed variances recur exactly); keys are
/// the exact bit patterns, which keeps results identical to the unmemoized
/// path regardless of thread count.
#[derive(Debug)]
pub struct MseTable {
    prior: Prior,
    cache: DashMap<u64, f64>,
}

impl MseTable {
    pub fn new(prior: Prior) -> Self {
        MseTable {
            prior,
            cache: DashMap::new(),
        }
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn mse(&self, sigma_eff_sq: f64) -> Result<f64> {
        let key = sigma_eff_sq.to_bits();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(*hit);
        }
        let value = mse_of_denoiser(&self.prior, sigma_eff_sq)?;
        self.cache.insert(key, value);
        Ok(value)
    }

    pub fn se_step(&self, sigma_sq: f64, distortion: f64, params: &ProblemParams) -> Result<f64> {
        if !(sigma_sq > 0.0) {
            return Err(Error::domain(format!("sigma_sq must be positive, got {sigma_sq}")));
        }
        let eff = sigma_sq + params.nodes as f64 * distortion;
        Ok(params.sigma_z_sq + self.mse(eff)? / params.kappa)
    }

    pub fn mmse(&self, params: &ProblemParams, tol: f64, max_iter: usize) -> Result<f64> {
        let mut sigma = params.initial_sigma_sq();
        for _ in 0..max_iter {
            let next = params.sigma_z_sq + self.mse(sigma)? / params.kappa;
            if (next - sigma).abs() < tol {
                return self.mse(next);
            }
            sigma = next;
        }
        let next = params.sigma_z_sq + self.mse(sigma)? / params.kappa;
        Err(Error::FixedPoint {
            max_iter,
            prev: sigma,
            last: next,
        })
    }
}

/// Per-iteration record of a state-evolution run.
///
/// `sigma_sq[t-1]` is the pre-denoising channel variance entering iteration
/// `t` (so the vector has `T + 1` entries, ending with the post-run state);
/// `effective_sigma_sq`, `distortion`, `mse` and `emse` have one entry per
/// iteration. A zero rate is a no-op: no bits, no computation, state held.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub sigma_sq: Vec<f64>,
    pub effective_sigma_sq: Vec<f64>,
    pub distortion: Vec<f64>,
    pub mse: Vec<f64>,
    pub emse: Vec<f64>,
    pub mmse: f64,
}

impl StateTrajectory {
    pub fn iterations(&self) -> usize {
        self.mse.len()
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse.last().expect("trajectory has at least one iteration")
    }
}

/// Runs lossy state evolution for a coding-rate schedule, mapping each rate
/// to a distortion through `rd_model` evaluated at the per-node source
/// variance of the current iteration.
pub fn se_trajectory(rates: &[f64], params: &ProblemParams, rd_model: &RdModel) -> Result<StateTrajectory> {
    if rates.is_empty() {
        return Err(Error::domain("schedule must contain at least one rate"));
    }
    if rates.iter().any(|r| r.is_nan() || *r < 0.0) {
        return Err(Error::domain("rates must be nonnegative"));
    }
    let mmse_val = mmse(params, 1e-12, 10_000)?;
    let mut sigma = params.initial_sigma_sq();
    let mut current_mse = params.prior.second_moment();
    let nodes = params.nodes as f64;

    let mut out = StateTrajectory {
        sigma_sq: Vec::with_capacity(rates.len() + 1),
        effective_sigma_sq: Vec::with_capacity(rates.len()),
        distortion: Vec::with_capacity(rates.len()),
        mse: Vec::with_capacity(rates.len()),
        emse: Vec::with_capacity(rates.len()),
        mmse: mmse_val,
    };
    out.sigma_sq.push(sigma);
    for &rate in rates {
        if rate == 0.0 {
            // No-op iteration: nothing transmitted, estimate unchanged.
            out.effective_sigma_sq.push(sigma);
            out.distortion.push(0.0);
            out.mse.push(current_mse);
            out.emse.push(current_mse - mmse_val);
            out.sigma_sq.push(sigma);
            continue;
        }
        let d = rd_model.distortion_for_rate(rate, sigma, params)?;
        let eff = sigma + nodes * d;
        let m = mse_of_denoiser(&params.prior, eff)?;
        out.effective_sigma_sq.push(eff);
        out.distortion.push(d);
        out.mse.push(m);
        out.emse.push(m - mmse_val);
        sigma = params.sigma_z_sq + m / params.kappa;
        current_mse = m;
        out.sigma_sq.push(sigma);
    }
    Ok(out)
}
