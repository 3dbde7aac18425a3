use crate::harness::wire::WireError;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Numerical integration did not reach the requested accuracy.
    #[error(
        "quadrature did not converge at sigma_eff_sq={sigma_eff_sq:.6e}: \
         estimated error {achieved:.3e} above target {target:.3e}"
    )]
    Quadrature {
        sigma_eff_sq: f64,
        achieved: f64,
        target: f64,
    },

    /// A fixed-point iteration ran out of its iteration budget.
    #[error(
        "fixed point not reached after {max_iter} iterations \
         (last two iterates {prev:.12e}, {last:.12e})"
    )]
    FixedPoint { max_iter: usize, prev: f64, last: f64 },

    /// The requested final MSE lies at or below the MMSE floor.
    #[error("target MSE {delta:.6e} is infeasible: the MMSE is {mmse:.6e}")]
    Infeasible { delta: f64, mmse: f64 },

    /// The DP horizon cap was hit before the value function stabilized.
    #[error("horizon cap {max_horizon} reached before the value function stabilized (best cost so far: {best_cost})")]
    HorizonCap { max_horizon: usize, best_cost: f64 },

    /// A state left the discretized sigma^2 grid during schedule recovery.
    #[error("state sigma_sq={sigma_sq:.6e} escaped the grid [{lo:.6e}, {hi:.6e}]; rebuild the grids wider")]
    GridCoverage { sigma_sq: f64, lo: f64, hi: f64 },

    /// Blahut-Arimoto did not converge within its iteration budget.
    #[error("Blahut-Arimoto did not converge after {max_iter} iterations (gap {gap:.3e} above tol {tol:.3e})")]
    BaConvergence { max_iter: usize, gap: f64, tol: f64 },

    /// A regression had too few usable points.
    #[error("fit needs at least {needed} usable points, got {usable}")]
    FitUnderdetermined { needed: usize, usable: usize },

    /// An iterative reconstruction blew up.
    #[error("divergence at iteration {iteration}: empirical MSE {mse:.3e} (trace: {trace:?})")]
    Divergence {
        iteration: usize,
        mse: f64,
        trace: Vec<f64>,
    },

    /// Wire-format encode/decode failure.
    #[error(transparent)]
    Wire(#[from] WireError),

    /// Cluster startup or shutdown failure.
    #[error("cluster error: {0}")]
    Cluster(String),

    /// A round violated the synchronous protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
