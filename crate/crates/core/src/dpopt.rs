//! Backward dynamic program over coding-rate schedules.
//!
//! The value function is the minimum combined cost of finishing from state
//! `sigma^2` with `h` iteration slots left:
//!
//! ```text
//! Psi_0(s)  = min over nonzero grid rates R with final MSE(s, R) <= delta
//!             of c1 + c2 * R
//! Psi_h(s)  = min( Psi_{h-1}(s),                                // R = 0
//!                  min over R > 0 of c1 + c2 * R + Psi_{h-1}(next(s, R)) )
//! ```
//!
//! A zero rate is a no-op (nothing computed, nothing sent, no cost), which
//! lets the fixed-slot recursion emulate every schedule length up to the
//! horizon. The final slot always transmits. Successor states snap upward
//! (toward larger `sigma^2`) onto the log-spaced grid, so the discretized
//! recursion over-estimates the reachable MSE and recovered schedules meet
//! their target when replayed without snapping.
//!
//! Ties in the per-cell argmin resolve to the smaller rate, scanning the
//! rate grid in ascending order with strict improvement required; this
//! recovers, among minimum-cost slot vectors, the lexicographically smallest
//! one (zero slots first, i.e. transmissions as late as possible).

use std::sync::Arc;

use rayon::prelude::*;

use crate::rd::RdModel;
use crate::sevo::{mmse, MseTable, ProblemParams};
use crate::{Error, Result};

/// Sentinel for an infeasible cell in the argmin table.
pub const NO_RATE: u16 = u16::MAX;

/// Per-iteration computation cost `c1` and per-bit communication cost `c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    c1: f64,
    c2: f64,
}

impl CostModel {
    pub fn from_costs(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0) || !(c2 >= 0.0) || !c1.is_finite() || !c2.is_finite() {
            return Err(Error::domain(format!(
                "costs must be finite and nonnegative, got c1={c1}, c2={c2}"
            )));
        }
        if c1 == 0.0 && c2 == 0.0 {
            return Err(Error::domain("c1 and c2 must not both be zero"));
        }
        Ok(CostModel { c1, c2 })
    }

    /// Cost model with unit communication cost and `b = c1 / c2`.
    pub fn from_relative_cost(b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::domain(format!("relative cost must be nonnegative, got {b}")));
        }
        CostModel::from_costs(b, 1.0)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// `b = c1 / c2` (infinite when communication is free).
    pub fn relative_cost(&self) -> f64 {
        self.c1 / self.c2
    }
}

/// Knobs for grid construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of log-spaced sigma^2 states.
    pub sigma_states: usize,
    /// Rate grid step in bits.
    pub rate_step: f64,
    /// Largest candidate rate in bits.
    pub rate_max: f64,
    /// Maximum number of iteration slots.
    pub max_horizon: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            sigma_states: 1024,
            rate_step: 0.05,
            rate_max: 12.0,
            max_horizon: 200,
        }
    }
}

/// Discretized search space: descending sigma^2 states, ascending rates
/// (starting at the zero no-op rate), the final-MSE target, and horizon
/// controls.
#[derive(Debug, Clone)]
pub struct DpGrids {
    pub sigma_grid: Vec<f64>,
    pub rate_grid: Vec<f64>,
    pub delta: f64,
    pub max_horizon: usize,
    /// Horizon growth stops when the top-state value improves by less than
    /// `stop_rel * c2`.
    pub stop_rel: f64,
    /// Evaluate every horizon up to `max_horizon` instead of stopping at the
    /// first stall (exhaustive-oracle comparisons need the full table).
    pub force_full_horizon: bool,
}

impl DpGrids {
    pub fn new(sigma_grid: Vec<f64>, rate_grid: Vec<f64>, delta: f64, max_horizon: usize) -> Result<Self> {
        if sigma_grid.len() < 2 || !sigma_grid.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::domain("sigma grid must be strictly descending with at least 2 states"));
        }
        if sigma_grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::domain("sigma grid entries must be positive and finite"));
        }
        if rate_grid.is_empty() || rate_grid[0] != 0.0 || !rate_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("rate grid must be ascending and start at 0"));
        }
        if rate_grid.len() >= NO_RATE as usize {
            return Err(Error::domain("rate grid too large"));
        }
        if rate_grid.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("rate grid entries must be finite"));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::domain(format!("delta must be positive, got {delta}")));
        }
        if max_horizon == 0 {
            return Err(Error::domain("max_horizon must be at least 1"));
        }
        Ok(DpGrids {
            sigma_grid,
            rate_grid,
            delta,
            max_horizon,
            stop_rel: 1e-9,
            force_full_horizon: false,
        })
    }

    /// Builds default grids for a problem: sigma^2 log-spaced from the
    /// initial state down to just under the state reached at the target MSE.
    pub fn for_problem(params: &ProblemParams, delta: f64, spec: &GridSpec) -> Result<Self> {
        let mm = mmse(params, 1e-12, 10_000)?;
        Self::for_problem_with_mmse(params, delta, spec, mm)
    }

    /// As [`for_problem`](Self::for_problem) with the MMSE already in hand
    /// (sweeps compute it once).
    pub fn for_problem_with_mmse(
        params: &ProblemParams,
        delta: f64,
        spec: &GridSpec,
        mmse_value: f64,
    ) -> Result<Self> {
        if !(delta > mmse_value * (1.0 + 1e-9)) {
            return Err(Error::Infeasible {
                delta,
                mmse: mmse_value,
            });
        }
        if spec.sigma_states < 2 {
            return Err(Error::domain("sigma_states must be at least 2"));
        }
        let upper = params.initial_sigma_sq();
        let lower = params.sigma_z_sq + (mmse_value + 0.2 * (delta - mmse_value)) / params.kappa;
        let n = spec.sigma_states;
        let (lu, ll) = (upper.ln(), lower.ln());
        let mut sigma_grid: Vec<f64> = (0..n)
            .map(|i| (lu + (ll - lu) * i as f64 / (n - 1) as f64).exp())
            .collect();
        sigma_grid[0] = upper;
        sigma_grid[n - 1] = lower;
        let steps = (spec.rate_max / spec.rate_step + 1e-9).floor() as usize;
        if spec.rate_step <= 0.0 || steps == 0 {
            return Err(Error::domain("rate grid spec must yield at least one positive rate"));
        }
        let rate_grid: Vec<f64> = (0..=steps).map(|i| i as f64 * spec.rate_step).collect();
        DpGrids::new(sigma_grid, rate_grid, delta, spec.max_horizon)
    }

    /// Index of the grid state reached by rounding `sigma_sq` up (toward
    /// larger variance). `None` when `sigma_sq` lies above the whole grid;
    /// values below the grid clamp to the smallest state, which is still an
    /// upward round.
    pub fn snap_up(&self, sigma_sq: f64) -> Option<usize> {
        let i = self.sigma_grid.partition_point(|&g| g >= sigma_sq);
        if i == 0 {
            None
        } else {
            Some(i - 1)
        }
    }
}

/// Precomputed per-(state, rate) transition data: the post-denoising MSE and
/// the snapped successor state. Rate index 0 is the no-op.
#[derive(Debug)]
pub(crate) struct Transitions {
    n_states: usize,
    n_rates: usize,
    /// Flattened `[state * n_rates + rate]`; +inf for the no-op column.
    final_mse: Vec<f64>,
    next_idx: Vec<u32>,
}

impl Transitions {
    pub(crate) fn build(
        params: &ProblemParams,
        grids: &DpGrids,
        rd_model: &RdModel,
        table: &MseTable,
    ) -> Result<Self> {
        let n_states = grids.sigma_grid.len();
        let n_rates = grids.rate_grid.len();
        let nodes = params.nodes as f64;
        let rows: Vec<(Vec<f64>, Vec<u32>)> = (0..n_states)
            .into_par_iter()
            .map(|s| -> Result<(Vec<f64>, Vec<u32>)> {
                let sigma = grids.sigma_grid[s];
                let mut mse_row = Vec::with_capacity(n_rates);
                let mut next_row = Vec::with_capacity(n_rates);
                for (r, &rate) in grids.rate_grid.iter().enumerate() {
                    if r == 0 {
                        mse_row.push(f64::INFINITY);
                        next_row.push(s as u32);
                        continue;
                    }
                    let d = rd_model.distortion_for_rate(rate, sigma, params)?;
                    let eff = sigma + nodes * d;
                    let m = table.mse(eff)?;
                    let next = params.sigma_z_sq + m / params.kappa;
                    let idx = grids.snap_up(next).ok_or(Error::GridCoverage {
                        sigma_sq: next,
                        lo: *grids.sigma_grid.last().unwrap(),
                        hi: grids.sigma_grid[0],
                    })?;
                    mse_row.push(m);
                    next_row.push(idx as u32);
                }
                Ok((mse_row, next_row))
            })
            .collect::<Result<_>>()?;
        let mut final_mse = Vec::with_capacity(n_states * n_rates);
        let mut next_idx = Vec::with_capacity(n_states * n_rates);
        for (m, n) in rows {
            final_mse.extend(m);
            next_idx.extend(n);
        }
        Ok(Transitions {
            n_states,
            n_rates,
            final_mse,
            next_idx,
        })
    }

    #[inline]
    pub(crate) fn final_mse(&self, state: usize, rate: usize) -> f64 {
        self.final_mse[state * self.n_rates + rate]
    }

    #[inline]
    pub(crate) fn next(&self, state: usize, rate: usize) -> usize {
        self.next_idx[state * self.n_rates + rate] as usize
    }
}

/// Backward value and argmin tables, indexed `[horizon][state]`.
#[derive(Debug)]
pub struct PolicyTable {
    /// `values[h][s]` = minimum cost to finish from state `s` with `h + 1`
    /// slots remaining (infinite where the target is unreachable).
    pub values: Vec<Vec<f64>>,
    /// Rate-grid index minimizing each cell; [`NO_RATE`] where infeasible.
    pub argmin_rates: Vec<Vec<u16>>,
    /// Horizon at which growth stopped; recovery starts here.
    pub horizon_used: usize,
    cost: CostModel,
    delta: f64,
    transitions: Arc<Transitions>,
}

impl PolicyTable {
    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Value at the initial state of the problem.
    pub fn optimal_cost(&self, params: &ProblemParams, grids: &DpGrids) -> Result<f64> {
        let idx = self.initial_state(params, grids)?;
        Ok(self.values[self.horizon_used][idx])
    }

    fn initial_state(&self, params: &ProblemParams, grids: &DpGrids) -> Result<usize> {
        let s1 = params.initial_sigma_sq();
        grids.snap_up(s1).ok_or(Error::GridCoverage {
            sigma_sq: s1,
            lo: *grids.sigma_grid.last().unwrap(),
            hi: grids.sigma_grid[0],
        })
    }
}

/// A coding-rate schedule with its aggregate rate and total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingRateSchedule {
    rates: Vec<f64>,
    r_agg: f64,
    total_cost: f64,
}

impl CodingRateSchedule {
    pub fn new(rates: Vec<f64>, cost: &CostModel) -> Result<Self> {
        if rates.iter().any(|r| r.is_nan() || *r < 0.0) {
            return Err(Error::domain("rates must be nonnegative"));
        }
        let r_agg = rates.iter().sum();
        let total_cost = cost_of_rates(&rates, cost);
        Ok(CodingRateSchedule {
            rates,
            r_agg,
            total_cost,
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn iterations(&self) -> usize {
        self.rates.len()
    }

    /// Sum of the per-iteration rates.
    pub fn aggregate_rate(&self) -> f64 {
        self.r_agg
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }
}

fn cost_of_rates(rates: &[f64], cost: &CostModel) -> f64 {
    let transmitting = rates.iter().filter(|r| **r != 0.0).count() as f64;
    let r_agg: f64 = rates.iter().sum();
    cost.c1() * transmitting + cost.c2() * r_agg
}

/// `c1 * |{t : R_t != 0}| + c2 * sum_t R_t`.
pub fn schedule_cost(schedule: &CodingRateSchedule, cost: &CostModel) -> f64 {
    cost_of_rates(schedule.rates(), cost)
}

/// Builds the backward value/argmin tables for the given problem, cost
/// model, grids, and rate-to-distortion model.
pub fn build_policy(
    params: &ProblemParams,
    cost: &CostModel,
    grids: &DpGrids,
    rd_model: &RdModel,
) -> Result<PolicyTable> {
    let table = MseTable::new(params.prior);
    let mm = table.mmse(params, 1e-12, 10_000)?;
    if !(grids.delta > mm * (1.0 + 1e-9)) {
        return Err(Error::Infeasible {
            delta: grids.delta,
            mmse: mm,
        });
    }
    let transitions = Arc::new(Transitions::build(params, grids, rd_model, &table)?);
    let stall_state = grids.snap_up(params.initial_sigma_sq()).unwrap_or(0);
    dp_core(transitions, grids, cost, stall_state)
}

/// Value iteration over the precomputed transitions. Shared by
/// [`build_policy`] and the Pareto sweep (which reuses one transition table
/// across every cell).
pub(crate) fn dp_core(
    transitions: Arc<Transitions>,
    grids: &DpGrids,
    cost: &CostModel,
    stall_state: usize,
) -> Result<PolicyTable> {
    let n_states = transitions.n_states;
    let n_rates = transitions.n_rates;
    let rates = &grids.rate_grid;
    let (c1, c2) = (cost.c1(), cost.c2());
    let stop_tol = grids.stop_rel * c2;

    // Basis: the final slot must transmit; take the smallest feasible rate.
    let mut basis_vals = vec![f64::INFINITY; n_states];
    let mut basis_args = vec![NO_RATE; n_states];
    for s in 0..n_states {
        for r in 1..n_rates {
            if transitions.final_mse(s, r) <= grids.delta {
                basis_vals[s] = c1 + c2 * rates[r];
                basis_args[s] = r as u16;
                break;
            }
        }
    }
    let mut values = vec![basis_vals];
    let mut argmin = vec![basis_args];

    let mut stabilized = false;
    for h in 1..grids.max_horizon {
        let prev = &values[h - 1];
        let (row_vals, row_args): (Vec<f64>, Vec<u16>) = (0..n_states)
            .into_par_iter()
            .map(|s| {
                // Rate 0 defers: same state, one fewer slot, no cost.
                let mut best = prev[s];
                let mut best_r = 0u16;
                for r in 1..n_rates {
                    let tail = prev[transitions.next(s, r)];
                    if tail.is_finite() {
                        let cand = c1 + c2 * rates[r] + tail;
                        if cand < best {
                            best = cand;
                            best_r = r as u16;
                        }
                    }
                }
                if best.is_finite() {
                    (best, best_r)
                } else {
                    (f64::INFINITY, NO_RATE)
                }
            })
            .unzip();
        let improved = row_vals[stall_state] < prev[stall_state] - stop_tol;
        let finite = row_vals[stall_state].is_finite();
        values.push(row_vals);
        argmin.push(row_args);
        if !grids.force_full_horizon && finite && !improved {
            // The new horizon adds nothing; recover from the previous one.
            values.pop();
            argmin.pop();
            stabilized = true;
            break;
        }
    }
    if !grids.force_full_horizon && !stabilized && grids.max_horizon > 1 {
        let best_cost = values.last().map(|v| v[stall_state]).unwrap_or(f64::INFINITY);
        return Err(Error::HorizonCap {
            max_horizon: grids.max_horizon,
            best_cost,
        });
    }
    let horizon_used = values.len() - 1;
    if !values[horizon_used][stall_state].is_finite() {
        return Err(Error::HorizonCap {
            max_horizon: grids.max_horizon,
            best_cost: f64::INFINITY,
        });
    }
    Ok(PolicyTable {
        values,
        argmin_rates: argmin,
        horizon_used,
        cost: *cost,
        delta: grids.delta,
        transitions,
    })
}

/// Forward pass: walks the argmin table from the initial state, skipping
/// no-op slots, and returns the transmitted rates in iteration order.
///
/// The recovered schedule's final MSE is checked against the target (the
/// grid's upward rounding makes the unsnapped replay at least as good, so
/// only float-level slack is allowed).
pub fn recover_schedule(
    policy: &PolicyTable,
    params: &ProblemParams,
    grids: &DpGrids,
    rd_model: &RdModel,
) -> Result<CodingRateSchedule> {
    let mut state = policy.initial_state(params, grids)?;
    if !policy.values[policy.horizon_used][state].is_finite() {
        return Err(Error::domain(
            "policy is infeasible at the initial state; wider grids or a larger horizon are needed",
        ));
    }
    let trans = &policy.transitions;
    let mut rates = Vec::new();
    for h in (0..=policy.horizon_used).rev() {
        let r = policy.argmin_rates[h][state];
        if r == NO_RATE {
            return Err(Error::domain(format!(
                "argmin table infeasible at horizon {h}, state {state}"
            )));
        }
        let r = r as usize;
        if h == 0 {
            let m = trans.final_mse(state, r);
            let slack = 1e-9 * policy.delta;
            if m > policy.delta + slack {
                return Err(Error::domain(format!(
                    "recovered schedule misses the target: final MSE {m} > delta {}",
                    policy.delta
                )));
            }
            rates.push(grids.rate_grid[r]);
        } else if r > 0 {
            rates.push(grids.rate_grid[r]);
            state = trans.next(state, r);
        }
    }
    let schedule = CodingRateSchedule::new(rates, &policy.cost)?;

    // Unsnapped replay of the recovered schedule against the target.
    let nodes = params.nodes as f64;
    let mut sigma = params.initial_sigma_sq();
    let mut final_mse = params.prior.second_moment();
    for &rate in schedule.rates() {
        let d = rd_model.distortion_for_rate(rate, sigma, params)?;
        final_mse = crate::sevo::mse_of_denoiser(&params.prior, sigma + nodes * d)?;
        sigma = params.sigma_z_sq + final_mse / params.kappa;
    }
    if final_mse > policy.delta * (1.0 + 1e-9) {
        return Err(Error::domain(format!(
            "unsnapped replay misses the target: final MSE {final_mse} > delta {}",
            policy.delta
        )));
    }
    Ok(schedule)
}
