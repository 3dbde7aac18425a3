//! Signal prior, Bayesian denoiser, and scalar-channel primitives.
//!
//! Every other module reduces to the scalar problem `F = X + W`, where `X`
//! follows the signal prior and `W ~ N(0, sigma_eff^2)`. The MMSE denoiser
//! is the posterior mean `E[X | F = f]`; for the Bernoulli-Gaussian prior it
//! has the closed form `m(f) * f * a / (a + sigma_eff^2)` with `m(f)` the
//! posterior probability that the entry is active.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// Signal prior. One variant today; the denoiser dispatches on the variant
/// so further priors stay additive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// `x ~ eps * N(0, active_variance) + (1 - eps) * delta(x)`.
    BernoulliGaussian {
        /// Probability that an entry is active, in (0, 1).
        sparsity_rate: f64,
        /// Variance of the active (Gaussian) component.
        active_variance: f64,
    },
}

impl Prior {
    /// Bernoulli-Gaussian prior with unit active variance.
    pub fn bernoulli_gaussian(sparsity_rate: f64) -> Result<Self> {
        Self::bernoulli_gaussian_with_variance(sparsity_rate, 1.0)
    }

    pub fn bernoulli_gaussian_with_variance(sparsity_rate: f64, active_variance: f64) -> Result<Self> {
        if !(sparsity_rate > 0.0 && sparsity_rate < 1.0) || !sparsity_rate.is_finite() {
            return Err(Error::domain(format!(
                "sparsity_rate must lie in (0, 1), got {sparsity_rate}"
            )));
        }
        if !(active_variance > 0.0) || !active_variance.is_finite() {
            return Err(Error::domain(format!(
                "active_variance must be positive, got {active_variance}"
            )));
        }
        Ok(Prior::BernoulliGaussian {
            sparsity_rate,
            active_variance,
        })
    }

    pub fn sparsity_rate(&self) -> f64 {
        match *self {
            Prior::BernoulliGaussian { sparsity_rate, .. } => sparsity_rate,
        }
    }

    pub fn active_variance(&self) -> f64 {
        match *self {
            Prior::BernoulliGaussian { active_variance, .. } => active_variance,
        }
    }

    /// `E[X^2] = eps * active_variance`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Prior::BernoulliGaussian {
                sparsity_rate,
                active_variance,
            } => sparsity_rate * active_variance,
        }
    }
}

/// Effective additive-Gaussian scalar channel `F = X + W`, `W ~ N(0, v)`.
/// For lossy MP-AMP the variance composes as `sigma_t^2 + P * D_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarChannelParams {
    noise_variance: f64,
}

impl ScalarChannelParams {
    pub fn new(noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::domain(format!(
                "noise variance must be finite and nonnegative, got {noise_variance}"
            )));
        }
        Ok(ScalarChannelParams { noise_variance })
    }

    /// Channel seen by the fused estimate: `sigma_sq + nodes * distortion`.
    pub fn compose(sigma_sq: f64, nodes: usize, distortion: f64) -> Result<Self> {
        if !(distortion >= 0.0) {
            return Err(Error::domain(format!(
                "distortion must be nonnegative, got {distortion}"
            )));
        }
        Self::new(sigma_sq + nodes as f64 * distortion)
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }
}

/// Posterior-mean denoiser for one (prior, channel) pair, with the
/// per-channel constants precomputed so vector passes stay cheap.
///
/// Gaussian densities are combined in log space: the posterior spike
/// probability is a ratio of densities that both underflow for |f| well
/// above the noise level, so it is evaluated as a logistic of the log-odds.
#[derive(Debug, Clone, Copy)]
pub struct Denoiser {
    /// Wiener gain `a / (a + v)`.
    gain: f64,
    /// Log-odds of the active branch at f = 0.
    log_odds: f64,
    /// Coefficient of f^2 in the log-odds: `a / (2 v (a + v))`.
    quad_coef: f64,
}

impl Denoiser {
    pub fn new(prior: &Prior, channel: ScalarChannelParams) -> Result<Self> {
        let v = channel.noise_variance();
        if !(v > 0.0) {
            return Err(Error::domain(format!(
                "denoising requires positive noise variance, got {v}"
            )));
        }
        let eps = prior.sparsity_rate();
        let a = prior.active_variance();
        Ok(Denoiser {
            gain: a / (a + v),
            log_odds: (eps / (1.0 - eps)).ln() - 0.5 * ((a + v) / v).ln(),
            quad_coef: a / (2.0 * v * (a + v)),
        })
    }

    /// Posterior probability that the entry is active given observation f.
    #[inline]
    pub fn spike_probability(&self, f: f64) -> f64 {
        sigmoid(self.log_odds + self.quad_coef * f * f)
    }

    /// `E[X | F = f]`.
    #[inline]
    pub fn denoise(&self, f: f64) -> f64 {
        self.spike_probability(f) * self.gain * f
    }

    /// `d/df E[X | F = f]`.
    #[inline]
    pub fn derivative(&self, f: f64) -> f64 {
        let m = self.spike_probability(f);
        self.gain * (m + 2.0 * self.quad_coef * f * f * m * (1.0 - m))
    }

    #[inline]
    pub fn denoise_and_derivative(&self, f: f64) -> (f64, f64) {
        let m = self.spike_probability(f);
        (
            m * self.gain * f,
            self.gain * (m + 2.0 * self.quad_coef * f * f * m * (1.0 - m)),
        )
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `E[X | X + W = f]` for `W ~ N(0, sigma_eff_sq)`.
pub fn denoise(f: f64, prior: &Prior, channel: ScalarChannelParams) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::domain(format!("observation must be finite, got {f}")));
    }
    Ok(Denoiser::new(prior, channel)?.denoise(f))
}

/// Derivative of [`denoise`] with respect to f.
pub fn denoise_derivative(f: f64, prior: &Prior, channel: ScalarChannelParams) -> Result<f64> {
    if !f.is_finite() {
        return Err(Error::domain(format!("observation must be finite, got {f}")));
    }
    Ok(Denoiser::new(prior, channel)?.derivative(f))
}

/// Draws `n` i.i.d. samples from the prior. Deterministic for a fixed seed.
pub fn sample_signal(prior: &Prior, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = prior.sparsity_rate();
    let normal = Normal::new(0.0, prior.active_variance().sqrt()).expect("valid std dev");
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < eps {
                normal.sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(v: f64) -> ScalarChannelParams {
        ScalarChannelParams::new(v).unwrap()
    }

    /// Independent oracle: posterior mean by Simpson integration of
    /// x * p(x | f) over the active branch on a fine grid.
    fn posterior_mean_oracle(f: f64, eps: f64, a: f64, v: f64) -> f64 {
        let phi = |x: f64, var: f64| (-0.5 * x * x / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let (lo, hi) = (-12.0 * a.sqrt() + f.min(0.0), 12.0 * a.sqrt() + f.max(0.0));
        let n = 200_001; // odd so Simpson applies
        let h = (hi - lo) / (n - 1) as f64;
        let mut num = 0.0;
        let mut den_active = 0.0;
        for i in 0..n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let joint = phi(x, a) * phi(f - x, v);
            num += w * x * joint;
            den_active += w * joint;
        }
        num *= eps * h / 3.0;
        den_active *= eps * h / 3.0;
        let den = den_active + (1.0 - eps) * phi(f, v);
        num / den
    }

    #[test]
    fn denoise_is_zero_at_zero() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        for &v in &[0.01, 0.25, 1.0, 10.0] {
            assert_eq!(denoise(0.0, &prior, channel(v)).unwrap(), 0.0);
        }
    }

    #[test]
    fn denoise_approaches_identity_as_noise_vanishes() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        for &f in &[-2.0, -0.5, 0.5, 2.0] {
            let out = denoise(f, &prior, channel(1e-12)).unwrap();
            assert!((out - f).abs() <= 1e-9 * f.abs(), "f={f} out={out}");
        }
    }

    #[test]
    fn denoise_matches_grid_quadrature_oracle() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let got = denoise(2.0, &prior, channel(0.25)).unwrap();
        let want = posterior_mean_oracle(2.0, 0.1, 1.0, 0.25);
        assert!((got - want).abs() < 1e-8, "got {got}, oracle {want}");
        // A second point away from the symmetric case.
        let got = denoise(-0.7, &prior, channel(0.5)).unwrap();
        let want = posterior_mean_oracle(-0.7, 0.1, 1.0, 0.5);
        assert!((got - want).abs() < 1e-8, "got {got}, oracle {want}");
    }

    #[test]
    fn derivative_matches_central_differences() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let ch = channel(0.5);
        let h = 1e-5;
        let d = denoise_derivative(1.3, &prior, ch).unwrap();
        let fd = (denoise(1.3 + h, &prior, ch).unwrap() - denoise(1.3 - h, &prior, ch).unwrap()) / (2.0 * h);
        assert!((d - fd).abs() < 1e-6, "analytic {d}, finite difference {fd}");
    }

    #[test]
    fn derivative_everywhere_close_to_finite_differences() {
        let prior = Prior::bernoulli_gaussian(0.15).unwrap();
        for &v in &[0.05, 0.3, 2.0] {
            let ch = channel(v);
            let h = 1e-5;
            let mut f = -10.0;
            while f <= 10.0 {
                let d = denoise_derivative(f, &prior, ch).unwrap();
                let fd = (denoise(f + h, &prior, ch).unwrap() - denoise(f - h, &prior, ch).unwrap())
                    / (2.0 * h);
                assert!((d - fd).abs() < 1e-6, "f={f} v={v}: {d} vs {fd}");
                f += 0.1;
            }
        }
    }

    #[test]
    fn derivative_at_zero_is_spike_probability_times_gain() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let ch = channel(0.5);
        let den = Denoiser::new(&prior, ch).unwrap();
        let expect = den.spike_probability(0.0) * 1.0 / (1.0 + 0.5);
        assert!((den.derivative(0.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn dense_prior_reduces_to_wiener_filter() {
        let prior = Prior::bernoulli_gaussian(0.999_999).unwrap();
        let v = 0.4;
        let gain = 1.0 / (1.0 + v);
        for &f in &[-3.0, 0.1, 7.0] {
            let d = denoise_derivative(f, &prior, channel(v)).unwrap();
            assert!((d - gain).abs() < 1e-4, "f={f}: {d} vs {gain}");
        }
    }

    #[test]
    fn denoiser_symmetry_and_monotonicity() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let ch = channel(0.3);
        let den = Denoiser::new(&prior, ch).unwrap();
        let mut prev = f64::NEG_INFINITY;
        let mut f = -8.0;
        while f <= 8.0 {
            let eta = den.denoise(f);
            assert!((eta + den.denoise(-f)).abs() < 1e-14, "odd symmetry at {f}");
            assert!(
                (den.derivative(f) - den.derivative(-f)).abs() < 1e-14,
                "even derivative at {f}"
            );
            assert!(eta >= prev - 1e-12, "monotone at {f}");
            prev = eta;
            f += 0.01;
        }
    }

    #[test]
    fn sampling_matches_prior_statistics() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let n = 100_000;
        let xs = sample_signal(&prior, n, 7).unwrap();
        let nonzero = xs.iter().filter(|&&x| x != 0.0).count() as f64 / n as f64;
        let tol = 3.0 * (0.1f64 * 0.9 / n as f64).sqrt();
        assert!((nonzero - 0.1).abs() < tol, "nonzero fraction {nonzero}");
        let m2: f64 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // Var(X^2) = eps * 3a^2 - (eps a)^2 for the mixture.
        let var_x2 = 0.1 * 3.0 - 0.01;
        assert!(
            (m2 - prior.second_moment()).abs() < 4.0 * (var_x2 / n as f64).sqrt(),
            "second moment {m2}"
        );
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let prior = Prior::bernoulli_gaussian(0.2).unwrap();
        assert_eq!(
            sample_signal(&prior, 512, 99).unwrap(),
            sample_signal(&prior, 512, 99).unwrap()
        );
        assert_ne!(
            sample_signal(&prior, 512, 99).unwrap(),
            sample_signal(&prior, 512, 100).unwrap()
        );
    }

    #[test]
    fn domain_errors() {
        assert!(Prior::bernoulli_gaussian(0.0).is_err());
        assert!(Prior::bernoulli_gaussian(1.0).is_err());
        assert!(Prior::bernoulli_gaussian_with_variance(0.1, 0.0).is_err());
        assert!(ScalarChannelParams::new(-0.1).is_err());
        assert!(ScalarChannelParams::new(f64::NAN).is_err());
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        assert!(denoise(f64::INFINITY, &prior, channel(0.5)).is_err());
        assert!(denoise(1.0, &prior, channel(0.0)).is_err());
        assert!(sample_signal(&prior, 0, 1).is_err());
    }
}
