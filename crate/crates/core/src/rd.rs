//! Rate-distortion models: mapping a per-iteration coding rate to the
//! per-node quantization distortion.
//!
//! Two routes are provided. The Gaussian closed form `D(R) = v * 2^(-2R)`
//! is the high-resolution law for a source of variance `v` and upper-bounds
//! the distortion achievable on any source of that variance; it is the
//! default because it keeps the schedule optimization smooth. The
//! Blahut-Arimoto route computes `R(D)` of the discretized per-node message
//! marginal under squared error, to quantify the gap left by the Gaussian
//! bound on the true mixture source.

use rayon::prelude::*;

use crate::sevo::ProblemParams;
use crate::{Error, Result};

/// One point on a rate-distortion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    /// Bits per component.
    pub rate_bits: f64,
    /// Mean squared quantization error.
    pub distortion: f64,
}

/// Discretization settings for the Blahut-Arimoto route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaConfig {
    /// Number of support points for the source (and reproduction) grid.
    pub points: usize,
    /// Half-width of the grid in standard deviations of the source.
    pub span_sigmas: f64,
    /// Convergence tolerance (nats) on the per-iteration decrease of the
    /// Lagrangian `I + slope * D`, which the alternating minimization lowers
    /// monotonically.
    pub tol: f64,
    /// Iteration budget per slope.
    pub max_iter: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        BaConfig {
            points: 2001,
            span_sigmas: 8.0,
            tol: 1e-10,
            max_iter: 50_000,
        }
    }
}

/// Rate-to-distortion model selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RdModel {
    /// `D(R) = v * 2^(-2R)` on the modeled per-node source variance.
    GaussianClosedForm,
    /// Blahut-Arimoto on the discretized per-node message marginal.
    BlahutArimoto(BaConfig),
}

impl RdModel {
    /// Distortion incurred at `rate_bits` for the per-node message at state
    /// `sigma_sq`, with the source variance modeled from the problem
    /// parameters.
    pub fn distortion_for_rate(&self, rate_bits: f64, sigma_sq: f64, params: &ProblemParams) -> Result<f64> {
        let v = per_node_source_variance(sigma_sq, params)?;
        self.distortion_for_source_variance(rate_bits, v, params)
    }

    /// Same mapping, driven by an explicitly supplied source variance
    /// (simulators use the empirical per-node mean square here).
    pub fn distortion_for_source_variance(
        &self,
        rate_bits: f64,
        source_variance: f64,
        params: &ProblemParams,
    ) -> Result<f64> {
        if rate_bits.is_nan() || rate_bits < 0.0 {
            return Err(Error::domain(format!("rate must be nonnegative, got {rate_bits}")));
        }
        if !(source_variance > 0.0) || !source_variance.is_finite() {
            return Err(Error::domain(format!(
                "source variance must be positive, got {source_variance}"
            )));
        }
        if rate_bits.is_infinite() {
            return Ok(0.0);
        }
        match self {
            RdModel::GaussianClosedForm => gaussian_rate_to_distortion(rate_bits, source_variance),
            RdModel::BlahutArimoto(cfg) => {
                if rate_bits == 0.0 {
                    return Ok(source_variance);
                }
                let source = node_message_source(source_variance, params, cfg)?;
                let point = ba_distortion_at_rate(&source, rate_bits, cfg)?;
                Ok(point.distortion)
            }
        }
    }
}

/// Per-entry variance of a node's pre-quantization message,
/// `E[X^2] / P^2 + sigma_sq / P`: the signal share plus that node's slice of
/// the effective channel noise.
pub fn per_node_source_variance(sigma_sq: f64, params: &ProblemParams) -> Result<f64> {
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(Error::domain(format!("sigma_sq must be positive, got {sigma_sq}")));
    }
    let p = params.nodes as f64;
    Ok(params.prior.second_moment() / (p * p) + sigma_sq / p)
}

/// `D(R) = v * 2^(-2R)`: distortion of a Gaussian codebook at `rate_bits`.
pub fn gaussian_rate_to_distortion(rate_bits: f64, variance: f64) -> Result<f64> {
    if rate_bits.is_nan() || rate_bits < 0.0 {
        return Err(Error::domain(format!("rate must be nonnegative, got {rate_bits}")));
    }
    if !(variance > 0.0) {
        return Err(Error::domain(format!("variance must be positive, got {variance}")));
    }
    Ok(variance * (-2.0 * rate_bits).exp2())
}

/// `R(D) = max(0, log2(v / D) / 2)`: bits needed to reach distortion `D` on a
/// Gaussian source of variance `v`.
pub fn gaussian_distortion_to_rate(distortion: f64, variance: f64) -> Result<f64> {
    if !(distortion > 0.0) {
        return Err(Error::domain(format!(
            "distortion must be positive, got {distortion}"
        )));
    }
    if !(variance > 0.0) {
        return Err(Error::domain(format!("variance must be positive, got {variance}")));
    }
    if distortion > variance {
        return Err(Error::domain(format!(
            "distortion {distortion} exceeds source variance {variance}"
        )));
    }
    Ok((variance / distortion).log2().max(0.0) / 2.0)
}

/// A probability mass function on a finite real support.
#[derive(Debug, Clone)]
pub struct DiscreteSource {
    pub points: Vec<f64>,
    pub pmf: Vec<f64>,
}

impl DiscreteSource {
    pub fn new(points: Vec<f64>, pmf: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != pmf.len() {
            return Err(Error::domain("support and pmf must be nonempty and equal-length"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("support points must be finite"));
        }
        if pmf.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::domain("pmf entries must be nonnegative"));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("pmf sums to {total}, expected 1 +- 1e-12")));
        }
        Ok(DiscreteSource { points, pmf })
    }

    /// Equal-spaced discretization of a zero-mean Gaussian mixture given as
    /// `(weight, variance)` branches, spanning `span_sigmas` standard
    /// deviations of the mixture, renormalized on the grid.
    pub fn gaussian_mixture(branches: &[(f64, f64)], points: usize, span_sigmas: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::domain("discretization needs at least 2 points"));
        }
        let total_w: f64 = branches.iter().map(|b| b.0).sum();
        if (total_w - 1.0).abs() > 1e-9 || branches.iter().any(|b| b.0 < 0.0 || b.1 < 0.0) {
            return Err(Error::domain("mixture weights must be a pmf with nonnegative variances"));
        }
        let var: f64 = branches.iter().map(|b| b.0 * b.1).sum();
        if !(var > 0.0) {
            return Err(Error::domain("mixture variance must be positive"));
        }
        let half = span_sigmas * var.sqrt();
        let step = 2.0 * half / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| -half + i as f64 * step).collect();
        let mut pmf = vec![0.0; points];
        for &(w, bv) in branches {
            if w == 0.0 {
                continue;
            }
            if bv == 0.0 {
                // Point mass lands on the nearest grid point.
                let idx = ((half / step).round() as usize).min(points - 1);
                pmf[idx] += w;
                continue;
            }
            let norm = 1.0 / (2.0 * std::f64::consts::PI * bv).sqrt();
            for (i, &x) in grid.iter().enumerate() {
                pmf[i] += w * norm * (-0.5 * x * x / bv).exp();
            }
        }
        let total: f64 = pmf.iter().sum();
        for p in &mut pmf {
            *p /= total;
        }
        DiscreteSource::new(grid, pmf)
    }

    /// Discretized `N(0, variance)`.
    pub fn gaussian(variance: f64, points: usize, span_sigmas: f64) -> Result<Self> {
        Self::gaussian_mixture(&[(1.0, variance)], points, span_sigmas)
    }

    pub fn variance(&self) -> f64 {
        let mean: f64 = self.points.iter().zip(&self.pmf).map(|(x, p)| x * p).sum();
        self.points
            .iter()
            .zip(&self.pmf)
            .map(|(x, p)| p * (x - mean) * (x - mean))
            .sum()
    }
}

/// The discretized marginal of one node's message: a two-branch Gaussian
/// mixture with the inactive branch carrying only the channel-noise share.
pub fn node_message_source(source_variance: f64, params: &ProblemParams, cfg: &BaConfig) -> Result<DiscreteSource> {
    let p = params.nodes as f64;
    let eps = params.prior.sparsity_rate();
    let spike = params.prior.active_variance() / (p * p);
    // Invert v = E[X^2]/P^2 + sigma^2/P for the noise share.
    let noise_share = (source_variance - params.prior.second_moment() / (p * p)).max(source_variance * 1e-6);
    DiscreteSource::gaussian_mixture(
        &[(1.0 - eps, noise_share), (eps, spike + noise_share)],
        cfg.points,
        cfg.span_sigmas,
    )
}

/// One point on the rate-distortion curve of a discrete source under squared
/// error, via alternating minimization at Lagrange slope `slope > 0`
/// (larger slopes favor smaller distortion).
pub fn blahut_arimoto(source: &DiscreteSource, slope: f64, cfg: &BaConfig) -> Result<RdPoint> {
    blahut_arimoto_from(source, slope, cfg, None).map(|(pt, _)| pt)
}

/// The reweighting pass at the heart of the alternating minimization: given
/// the reproduction marginal `q`, returns the factors
/// `c_j = sum_i p_i K_ij / z_i` with `z_i = sum_k q_k K_ik`, together with
/// the Lagrangian value `-sum_i p_i ln z_i` (the minimum of `I + slope * D`
/// over channels at this `q`).
fn ba_pass(kernel: &[Vec<f64>], p: &[f64], q: &[f64]) -> (Vec<f64>, f64) {
    let n = q.len();
    kernel
        .par_iter()
        .zip(p.par_iter())
        .fold(
            || (vec![0.0; n], 0.0f64),
            |(mut acc, mut val), (row, &pi)| {
                let z: f64 = row.iter().zip(q.iter()).map(|(k, qk)| k * qk).sum();
                val -= pi * z.ln();
                let w = pi / z;
                for (a, k) in acc.iter_mut().zip(row.iter()) {
                    *a += w * k;
                }
                (acc, val)
            },
        )
        .reduce(
            || (vec![0.0; n], 0.0f64),
            |(mut a, va), (b, vb)| {
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    *x += y;
                }
                (a, va + vb)
            },
        )
}

fn ba_step(q: &[f64], c: &[f64]) -> Vec<f64> {
    let mut next: Vec<f64> = q.iter().zip(c).map(|(qj, cj)| qj * cj).collect();
    let total: f64 = next.iter().sum();
    for v in &mut next {
        *v /= total;
    }
    next
}

/// Runs the minimization from an optional warm start and also returns the
/// final reproduction marginal (bisection reuses it across nearby slopes).
///
/// Plain alternating minimization crawls on fine grids (the contraction rate
/// approaches 1 as neighboring reproduction points become interchangeable),
/// so every cycle attempts a squared-extrapolation step from three
/// successive iterates, keeping it only when the Lagrangian does not rise.
fn blahut_arimoto_from(
    source: &DiscreteSource,
    slope: f64,
    cfg: &BaConfig,
    warm_start: Option<&[f64]>,
) -> Result<(RdPoint, Vec<f64>)> {
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(Error::domain(format!("slope must be positive, got {slope}")));
    }
    let n = source.points.len();
    if n == 1 || source.variance() == 0.0 {
        return Ok((
            RdPoint {
                rate_bits: 0.0,
                distortion: 0.0,
            },
            source.pmf.clone(),
        ));
    }
    let p = &source.pmf;
    let xs = &source.points;

    // kernel[i][j] = exp(-slope * (x_i - x_j)^2); reproduction grid = source grid,
    // so the diagonal is 1 and each row sum stays strictly positive.
    let kernel: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&xi| xs.iter().map(|&xj| (-slope * (xi - xj) * (xi - xj)).exp()).collect())
        .collect();

    // Warm starts are blended with the source pmf so every reproduction
    // letter needed by a positive-mass source point keeps strictly positive
    // mass (a zero there would zero a partition sum).
    let mut q: Vec<f64> = match warm_start {
        Some(w) if w.len() == n => w
            .iter()
            .zip(p.iter())
            .map(|(wj, pj)| 0.95 * wj + 0.05 * pj)
            .collect(),
        _ => p.clone(),
    };
    let mut converged = false;
    let mut cycle_value = f64::INFINITY;
    let mut decrease = f64::INFINITY;
    let mut passes = 0usize;
    while passes < cfg.max_iter {
        let (c0, l0) = ba_pass(&kernel, p, &q);
        let q1 = ba_step(&q, &c0);
        let (c1, l1) = ba_pass(&kernel, p, &q1);
        let q2 = ba_step(&q1, &c1);
        passes += 2;

        decrease = cycle_value - l0;
        cycle_value = l0;
        if decrease.abs() < cfg.tol {
            q = q1;
            converged = true;
            break;
        }

        // Squared extrapolation through (q, q1, q2).
        let mut rr = 0.0f64;
        let mut vv = 0.0f64;
        for j in 0..n {
            let r = q1[j] - q[j];
            let v = q2[j] - 2.0 * q1[j] + q[j];
            rr += r * r;
            vv += v * v;
        }
        let alpha = if vv > 0.0 {
            (-(rr / vv).sqrt()).clamp(-1024.0, -1.0)
        } else {
            -1.0
        };
        let mut q_acc = vec![0.0f64; n];
        let mut total = 0.0;
        for j in 0..n {
            let r = q1[j] - q[j];
            let v = q2[j] - 2.0 * q1[j] + q[j];
            let val = (q[j] - 2.0 * alpha * r + alpha * alpha * v).max(0.0);
            q_acc[j] = val;
            total += val;
        }
        if total > 0.0 && alpha < -1.0 {
            for v in &mut q_acc {
                *v /= total;
            }
            let (c_acc, l_acc) = ba_pass(&kernel, p, &q_acc);
            passes += 1;
            // The clamp to zero can starve a letter some source point needs,
            // which shows up as a non-finite value; fall back in that case.
            if l_acc.is_finite() && l_acc <= l1 {
                q = ba_step(&q_acc, &c_acc);
                continue;
            }
        }
        q = q2;
    }
    if !converged {
        return Err(Error::BaConvergence {
            max_iter: cfg.max_iter,
            gap: decrease,
            tol: cfg.tol,
        });
    }

    // Distortion and exact mutual information of the converged channel.
    let mut q_out = vec![0.0; n];
    let mut distortion = 0.0;
    for i in 0..n {
        let row = &kernel[i];
        let z: f64 = row.iter().zip(q.iter()).map(|(k, qk)| k * qk).sum();
        let w = p[i] / z;
        for j in 0..n {
            let trans = w * q[j] * row[j];
            q_out[j] += trans;
            let d = xs[i] - xs[j];
            distortion += trans * d * d;
        }
    }
    let mut info_nats = 0.0;
    for i in 0..n {
        let row = &kernel[i];
        let z: f64 = row.iter().zip(q.iter()).map(|(k, qk)| k * qk).sum();
        for j in 0..n {
            let cond = q[j] * row[j] / z;
            if cond > 0.0 && q_out[j] > 0.0 {
                info_nats += p[i] * cond * (cond / q_out[j]).ln();
            }
        }
    }
    Ok((
        RdPoint {
            rate_bits: (info_nats / std::f64::consts::LN_2).max(0.0),
            distortion,
        },
        q,
    ))
}

/// Finds the curve point whose rate is close to `rate_bits` (within about
/// 1e-4 bits or the bisection budget).
pub fn ba_distortion_at_rate(source: &DiscreteSource, rate_bits: f64, cfg: &BaConfig) -> Result<RdPoint> {
    bisect_slope(source, cfg, |pt| pt.rate_bits - rate_bits, 1e-4)
}

/// Finds the curve point whose distortion is within about 0.1% of `d_target`.
pub fn ba_rate_at_distortion(source: &DiscreteSource, d_target: f64, cfg: &BaConfig) -> Result<RdPoint> {
    if !(d_target > 0.0) {
        return Err(Error::domain(format!(
            "target distortion must be positive, got {d_target}"
        )));
    }
    bisect_slope(source, cfg, |pt| (d_target - pt.distortion) / d_target, 1e-3)
}

/// Bisection on the Lagrange slope. `objective` must be increasing in the
/// slope and cross zero at the desired point. Successive solves warm-start
/// from the previous reproduction marginal.
fn bisect_slope<F: Fn(&RdPoint) -> f64>(
    source: &DiscreteSource,
    cfg: &BaConfig,
    objective: F,
    obj_tol: f64,
) -> Result<RdPoint> {
    let v = source.variance();
    if v == 0.0 || source.points.len() == 1 {
        return Ok(RdPoint {
            rate_bits: 0.0,
            distortion: 0.0,
        });
    }
    let mut warm: Option<Vec<f64>> = None;
    let mut eval = |s: f64, warm: &mut Option<Vec<f64>>| -> Result<RdPoint> {
        let (pt, q) = blahut_arimoto_from(source, s, cfg, warm.as_deref())?;
        *warm = Some(q);
        Ok(pt)
    };
    // Gaussian heuristic: slope ~ 1/(2D); bracket wide around mid-curve.
    let mut lo = 1.0 / (2.0 * v) * 1e-3;
    let mut hi = 1.0 / (2.0 * v) * 1e6;
    let mut f_lo = objective(&eval(lo, &mut warm)?);
    let mut f_hi = objective(&eval(hi, &mut warm)?);
    for _ in 0..10 {
        if f_lo <= 0.0 {
            break;
        }
        lo *= 1e-2;
        f_lo = objective(&eval(lo, &mut warm)?);
    }
    for _ in 0..10 {
        if f_hi >= 0.0 {
            break;
        }
        hi *= 1e2;
        f_hi = objective(&eval(hi, &mut warm)?);
    }
    if f_lo > 0.0 || f_hi < 0.0 {
        // The target sits outside the achievable span of the discretized
        // curve; return the closest endpoint.
        let s = if f_lo > 0.0 { lo } else { hi };
        return eval(s, &mut warm);
    }
    let mut best = eval((lo * hi).sqrt(), &mut warm)?;
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        let pt = eval(mid, &mut warm)?;
        let obj = objective(&pt);
        best = pt;
        if obj.abs() < obj_tol {
            break;
        }
        if obj < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Sweeps the slope ladder and returns curve points ordered by decreasing
/// distortion.
pub fn ba_sweep(source: &DiscreteSource, n_points: usize, cfg: &BaConfig) -> Result<Vec<RdPoint>> {
    if n_points < 2 {
        return Err(Error::domain("sweep needs at least 2 points"));
    }
    let v = source.variance();
    let d_hi = 0.9 * v;
    let d_lo = 0.005 * v;
    let ratio = (d_lo / d_hi).powf(1.0 / (n_points - 1) as f64);
    let mut out = Vec::with_capacity(n_points);
    let mut warm: Option<Vec<f64>> = None;
    let mut d = d_hi;
    for _ in 0..n_points {
        let slope = 1.0 / (2.0 * d);
        let (pt, q) = blahut_arimoto_from(source, slope, cfg, warm.as_deref())?;
        warm = Some(q);
        out.push(pt);
        d *= ratio;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prior;

    fn paper_params() -> ProblemParams {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        ProblemParams::new(prior, 0.4, 1.0 / 400.0, 100).unwrap()
    }

    #[test]
    fn per_node_variance_examples() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let single = ProblemParams::new(prior, 0.4, 0.0025, 1).unwrap();
        let v = per_node_source_variance(0.2525, &single).unwrap();
        assert!((v - (0.1 + 0.2525)).abs() < 1e-15);

        let p100 = paper_params();
        let v = per_node_source_variance(0.2525, &p100).unwrap();
        assert!((v - 0.002_535_0).abs() < 1e-12, "got {v}");

        assert!(per_node_source_variance(0.0, &p100).is_err());
    }

    #[test]
    fn gaussian_pair_examples_and_inverse() {
        assert_eq!(gaussian_rate_to_distortion(0.0, 0.3).unwrap(), 0.3);
        assert!((gaussian_rate_to_distortion(1.0, 0.04).unwrap() - 0.01).abs() < 1e-18);
        assert!((gaussian_rate_to_distortion(3.0, 1.0).unwrap() - 1.0 / 64.0).abs() < 1e-18);
        assert_eq!(gaussian_distortion_to_rate(0.3, 0.3).unwrap(), 0.0);
        assert!((gaussian_distortion_to_rate(0.075, 0.3).unwrap() - 1.0).abs() < 1e-15);
        for &d in &[1e-6, 1e-3, 0.12, 0.299, 0.3] {
            let r = gaussian_distortion_to_rate(d, 0.3).unwrap();
            let back = gaussian_rate_to_distortion(r, 0.3).unwrap();
            assert!((back - d).abs() < 1e-12 * d.max(1.0), "roundtrip {d} -> {back}");
        }
        assert!(gaussian_distortion_to_rate(0.0, 1.0).is_err());
        assert!(gaussian_distortion_to_rate(1.1, 1.0).is_err());
    }

    #[test]
    fn ba_fair_bit_reaches_one_bit() {
        let source = DiscreteSource::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let cfg = BaConfig::default();
        let pt = blahut_arimoto(&source, 5.0, &cfg).unwrap();
        assert!(pt.rate_bits > 0.999 && pt.rate_bits <= 1.0 + 1e-9, "rate {}", pt.rate_bits);
        assert!(pt.distortion < 1e-6, "distortion {}", pt.distortion);
    }

    #[test]
    fn ba_gaussian_matches_closed_form_at_quarter_variance() {
        let cfg = BaConfig {
            points: 1001,
            span_sigmas: 6.0,
            ..BaConfig::default()
        };
        let source = DiscreteSource::gaussian(1.0, cfg.points, cfg.span_sigmas).unwrap();
        let pt = ba_rate_at_distortion(&source, 0.25, &cfg).unwrap();
        let oracle = gaussian_distortion_to_rate(pt.distortion, 1.0).unwrap();
        assert!((pt.distortion - 0.25).abs() < 0.005, "distortion {}", pt.distortion);
        assert!((pt.rate_bits - oracle).abs() < 0.05, "rate {} vs oracle {oracle}", pt.rate_bits);
    }

    #[test]
    fn ba_mixture_stays_below_gaussian_bound() {
        let cfg = BaConfig {
            points: 801,
            span_sigmas: 8.0,
            ..BaConfig::default()
        };
        let source =
            DiscreteSource::gaussian_mixture(&[(0.9, 0.02), (0.1, 1.02)], cfg.points, cfg.span_sigmas).unwrap();
        let v = source.variance();
        for pt in ba_sweep(&source, 6, &cfg).unwrap() {
            if pt.distortion <= 0.0 || pt.distortion >= v {
                continue;
            }
            let bound = gaussian_distortion_to_rate(pt.distortion, v).unwrap();
            assert!(
                pt.rate_bits <= bound + 1e-6,
                "rate {} above Gaussian bound {bound} at D={}",
                pt.rate_bits,
                pt.distortion
            );
        }
    }

    #[test]
    fn ba_sweep_is_convex_and_nonincreasing() {
        let cfg = BaConfig {
            points: 401,
            span_sigmas: 6.0,
            ..BaConfig::default()
        };
        let source = DiscreteSource::gaussian(1.0, cfg.points, cfg.span_sigmas).unwrap();
        let pts = ba_sweep(&source, 9, &cfg).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].distortion <= w[0].distortion + 1e-12);
            assert!(w[1].rate_bits >= w[0].rate_bits - 1e-6, "rate not nonincreasing in D");
        }
        // Convexity of R(D): slopes steepen as D falls.
        for w in pts.windows(3) {
            let s1 = (w[1].rate_bits - w[0].rate_bits) / (w[1].distortion - w[0].distortion);
            let s2 = (w[2].rate_bits - w[1].rate_bits) / (w[2].distortion - w[1].distortion);
            assert!(s2 <= s1 + 1e-6, "not convex: slopes {s1} then {s2}");
        }
    }

    #[test]
    fn degenerate_source_returns_origin() {
        let source = DiscreteSource::new(vec![0.7], vec![1.0]).unwrap();
        let pt = blahut_arimoto(&source, 3.0, &BaConfig::default()).unwrap();
        assert_eq!(pt, RdPoint { rate_bits: 0.0, distortion: 0.0 });
    }

    #[test]
    fn model_dispatch() {
        let p = paper_params();
        let g = RdModel::GaussianClosedForm;
        let v = per_node_source_variance(0.2525, &p).unwrap();
        assert_eq!(g.distortion_for_rate(0.0, 0.2525, &p).unwrap(), v);
        assert_eq!(g.distortion_for_rate(f64::INFINITY, 0.2525, &p).unwrap(), 0.0);
        let d = g.distortion_for_rate(1.0, 0.2525, &p).unwrap();
        assert!((d - v / 4.0).abs() < 1e-15);
        assert!(g.distortion_for_rate(-1.0, 0.2525, &p).is_err());

        let ba = RdModel::BlahutArimoto(BaConfig {
            points: 301,
            span_sigmas: 6.0,
            ..BaConfig::default()
        });
        assert_eq!(ba.distortion_for_rate(0.0, 0.2525, &p).unwrap(), v);
        let d_ba = ba.distortion_for_rate(1.0, 0.2525, &p).unwrap();
        // The true mixture needs no more bits than the Gaussian bound, so at
        // equal rate its distortion is no worse (within bisection slack).
        assert!(d_ba <= v / 4.0 * 1.1, "BA distortion {d_ba} vs Gaussian {}", v / 4.0);
    }

    #[test]
    fn pmf_validation() {
        assert!(DiscreteSource::new(vec![], vec![]).is_err());
        assert!(DiscreteSource::new(vec![0.0], vec![0.9]).is_err());
        assert!(DiscreteSource::new(vec![0.0, f64::NAN], vec![0.5, 0.5]).is_err());
        assert!(DiscreteSource::gaussian(1.0, 1, 6.0).is_err());
        let s = DiscreteSource::gaussian(2.0, 801, 8.0).unwrap();
        assert!((s.pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.variance() - 2.0).abs() < 0.01);
    }
}
