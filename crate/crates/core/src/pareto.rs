//! Achievable (iterations, aggregate rate, MSE) tuples, dominance filtering,
//! a numerical convexity check of the achievable surface, and least-squares
//! fits of the late-iteration rate growth and EMSE decay.

use rayon::prelude::*;
use std::sync::Arc;

use crate::dpopt::{self, CodingRateSchedule, CostModel, DpGrids, GridSpec};
use crate::rd::RdModel;
use crate::sevo::{MseTable, ProblemParams, StateTrajectory};
use crate::{Error, Result};

/// How a sweep point was produced.
#[derive(Debug, Clone)]
pub struct PointProvenance {
    /// Relative cost `b = c1 / c2` of the cell.
    pub relative_cost: f64,
    /// Absolute final-MSE target of the cell.
    pub delta: f64,
    /// The optimized schedule.
    pub schedule: CodingRateSchedule,
}

/// One achievable tuple.
#[derive(Debug, Clone)]
pub struct AchievablePoint {
    /// Number of transmitting iterations `T`.
    pub iterations: usize,
    /// Aggregate coding rate (bits per component summed over iterations).
    pub aggregate_rate: f64,
    /// Final SE-predicted MSE.
    pub mse: f64,
    pub provenance: Option<PointProvenance>,
}

impl AchievablePoint {
    pub fn new(iterations: usize, aggregate_rate: f64, mse: f64) -> Self {
        AchievablePoint {
            iterations,
            aggregate_rate,
            mse,
            provenance: None,
        }
    }

    fn coords(&self) -> [f64; 3] {
        [self.iterations as f64, self.aggregate_rate, self.mse]
    }
}

/// Componentwise (non-strict) dominance: `a` dominates `b` when every
/// coordinate of `a` is no larger. Reflexive by construction.
pub fn dominates(a: &AchievablePoint, b: &AchievablePoint) -> bool {
    a.iterations <= b.iterations && a.aggregate_rate <= b.aggregate_rate && a.mse <= b.mse
}

/// A dominance-filtered point set.
#[derive(Debug, Clone)]
pub struct ParetoFrontier {
    pub points: Vec<AchievablePoint>,
    /// Filled by [`convexity_check`]; `None` until checked.
    pub hull_violation: Option<f64>,
}

/// Removes every point dominated by a distinct point; exact coordinate
/// duplicates collapse to one representative.
pub fn pareto_filter(points: &[AchievablePoint]) -> Result<ParetoFrontier> {
    if points.is_empty() {
        return Err(Error::domain("cannot filter an empty point set"));
    }
    let mut unique: Vec<AchievablePoint> = Vec::new();
    for p in points {
        if !unique.iter().any(|q| q.coords() == p.coords()) {
            unique.push(p.clone());
        }
    }
    let kept: Vec<AchievablePoint> = unique
        .iter()
        .filter(|p| {
            !unique
                .iter()
                .any(|q| q.coords() != p.coords() && dominates(q, p))
        })
        .cloned()
        .collect();
    Ok(ParetoFrontier {
        points: kept,
        hull_violation: None,
    })
}

/// Outcome of the convexity check.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    /// Largest normalized vertical distance of a point above the lower
    /// convex envelope of the set.
    pub hull_violation: f64,
    pub tol: f64,
    pub pass: bool,
    /// Index and coordinates of the worst offender, when any point sits
    /// measurably above the envelope.
    pub worst_point: Option<(usize, [f64; 3])>,
}

/// Measures how far any frontier point sits above the lower convex envelope
/// of the frontier in (T, R_agg, MSE) space, with all three axes normalized
/// to [0, 1] (they live on incomparable scales). Discretized schedules give
/// approximately-Pareto points, so this is a tolerance test of the convex
/// geometry, not a proof.
pub fn convexity_check(frontier: &ParetoFrontier, tol: f64) -> Result<ConvexityReport> {
    let pts = &frontier.points;
    if pts.is_empty() {
        return Err(Error::domain("convexity check needs at least one point"));
    }
    let raw: Vec<[f64; 3]> = pts.iter().map(|p| p.coords()).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for c in &raw {
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let span: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]).max(0.0)).collect();
    let norm: Vec<[f64; 3]> = raw
        .iter()
        .map(|c| {
            let mut out = [0.0; 3];
            for k in 0..3 {
                out[k] = if span[k] > 0.0 { (c[k] - lo[k]) / span[k] } else { 0.0 };
            }
            out
        })
        .collect();

    // Lower envelope value below each point, over single points, edges, and
    // triangles of the set (any face of the hull decomposes into those, so
    // degenerate collinear/coplanar inputs need no special casing).
    let violations: Vec<f64> = (0..norm.len())
        .into_par_iter()
        .map(|i| {
            let (xi, yi, zi) = (norm[i][0], norm[i][1], norm[i][2]);
            let mut env = zi; // the point itself
            let eps = 1e-9;
            let n = norm.len();
            for j in 0..n {
                let (xj, yj, zj) = (norm[j][0], norm[j][1], norm[j][2]);
                if (xj - xi).abs() <= eps && (yj - yi).abs() <= eps {
                    env = env.min(zj);
                }
                for k in (j + 1)..n {
                    let (xk, yk, zk) = (norm[k][0], norm[k][1], norm[k][2]);
                    // Edge (j, k) through (xi, yi)?
                    let (dx, dy) = (xj - xk, yj - yk);
                    let lam = if dx.abs() > dy.abs() && dx.abs() > 1e-12 {
                        Some((xi - xk) / dx)
                    } else if dy.abs() > 1e-12 {
                        Some((yi - yk) / dy)
                    } else {
                        None
                    };
                    if let Some(l) = lam {
                        if (-eps..=1.0 + eps).contains(&l)
                            && (l * xj + (1.0 - l) * xk - xi).abs() <= eps
                            && (l * yj + (1.0 - l) * yk - yi).abs() <= eps
                        {
                            env = env.min(l * zj + (1.0 - l) * zk);
                        }
                    }
                    for l in (k + 1)..n {
                        let (xl, yl, zl) = (norm[l][0], norm[l][1], norm[l][2]);
                        let a11 = xj - xl;
                        let a12 = xk - xl;
                        let a21 = yj - yl;
                        let a22 = yk - yl;
                        let det = a11 * a22 - a12 * a21;
                        if det.abs() < 1e-12 {
                            continue;
                        }
                        let b1 = xi - xl;
                        let b2 = yi - yl;
                        let l1 = (b1 * a22 - a12 * b2) / det;
                        let l2 = (a11 * b2 - b1 * a21) / det;
                        let l3 = 1.0 - l1 - l2;
                        if l1 >= -eps && l2 >= -eps && l3 >= -eps {
                            env = env.min(l1 * zj + l2 * zk + l3 * zl);
                        }
                    }
                }
            }
            (zi - env).max(0.0)
        })
        .collect();
    let (worst_idx, &hull_violation) = violations
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    Ok(ConvexityReport {
        hull_violation,
        tol,
        pass: hull_violation <= tol,
        worst_point: if hull_violation > tol {
            Some((worst_idx, raw[worst_idx]))
        } else {
            None
        },
    })
}

/// One cell of a sweep that failed, with the reason.
#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub relative_cost: f64,
    pub delta: f64,
    pub message: String,
}

#[derive(Debug)]
pub struct SweepOutcome {
    /// One point per successful (b, delta) cell, ordered by (b, delta).
    pub points: Vec<AchievablePoint>,
    pub failures: Vec<SweepFailure>,
    /// MMSE of the problem (the floor every delta is measured against).
    pub mmse: f64,
}

/// Runs the schedule optimizer over every `(b, delta)` pair and returns the
/// achievable tuples. All cells share one sigma/rate grid (built for the
/// tightest target, so feasible sets nest across deltas) and one transition
/// table. Per-cell failures are recorded and the sweep continues.
pub fn sweep(
    params: &ProblemParams,
    b_list: &[f64],
    delta_list: &[f64],
    spec: &GridSpec,
    rd_model: &RdModel,
) -> Result<SweepOutcome> {
    if b_list.is_empty() || delta_list.is_empty() {
        return Err(Error::domain("sweep needs at least one b and one delta"));
    }
    let table = MseTable::new(params.prior);
    let mmse = table.mmse(params, 1e-12, 10_000)?;
    for &d in delta_list {
        if !(d > mmse * (1.0 + 1e-9)) {
            return Err(Error::Infeasible { delta: d, mmse });
        }
    }
    let delta_min = delta_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let proto = DpGrids::for_problem_with_mmse(params, delta_min, spec, mmse)?;
    let transitions = Arc::new(dpopt::Transitions::build(params, &proto, rd_model, &table)?);
    let stall_state = proto.snap_up(params.initial_sigma_sq()).unwrap_or(0);

    let mut cells: Vec<(f64, f64)> = Vec::new();
    for &b in b_list {
        for &d in delta_list {
            cells.push((b, d));
        }
    }
    cells.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let results: Vec<std::result::Result<AchievablePoint, SweepFailure>> = cells
        .par_iter()
        .map(|&(b, delta)| {
            let run = || -> Result<AchievablePoint> {
                let cost = CostModel::from_relative_cost(b)?;
                let mut grids = proto.clone();
                grids.delta = delta;
                let policy = dpopt::dp_core(transitions.clone(), &grids, &cost, stall_state)?;
                let schedule = dpopt::recover_schedule(&policy, params, &grids, rd_model)?;
                let traj = crate::sevo::se_trajectory(schedule.rates(), params, rd_model)?;
                Ok(AchievablePoint {
                    iterations: schedule.iterations(),
                    aggregate_rate: schedule.aggregate_rate(),
                    mse: traj.final_mse(),
                    provenance: Some(PointProvenance {
                        relative_cost: b,
                        delta,
                        schedule,
                    }),
                })
            };
            run().map_err(|e| SweepFailure {
                relative_cost: b,
                delta,
                message: e.to_string(),
            })
        })
        .collect();

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(f) => failures.push(f),
        }
    }
    Ok(SweepOutcome {
        points,
        failures,
        mmse,
    })
}

/// An ordinary least-squares line.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    LinearFit { slope, intercept, r2 }
}

fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx * syy).sqrt()
    } else {
        0.0
    }
}

/// Fit of total cost against squared log-inverse-EMSE across sweep points.
#[derive(Debug, Clone, Copy)]
pub struct CostScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub correlation: f64,
}

/// Late-iteration asymptotics extracted from one optimized run.
#[derive(Debug, Clone)]
pub struct ConjectureFit {
    /// Intercept of the linear rate fit `R_t ~ c4 + c5 t` (bits).
    pub rate_intercept_c4: f64,
    /// Slope of the rate fit (bits per iteration).
    pub rate_slope_c5: f64,
    pub rate_r2: f64,
    /// Per-iteration halving rate of the excess MSE: `EMSE_t ~ c8 * 2^(-c7 t)`.
    pub emse_decay_c7: f64,
    pub emse_prefactor_c8: f64,
    pub emse_r2: f64,
    /// EMSE entries at or below zero that had to be dropped from the log fit.
    pub emse_points_excluded: usize,
    /// Present when at least three usable sweep points were supplied.
    pub cost_scaling: Option<CostScalingFit>,
}

/// Least-squares fits on the tail window `t >= burn_in` (iterations are
/// 1-indexed): the per-iteration rate against `t`, `log2(EMSE_t)` against
/// `t`, and, across `sweep_points`, total cost against `log2^2(1/EMSE*)`.
pub fn fit_conjecture(
    schedule: &CodingRateSchedule,
    trajectory: &StateTrajectory,
    sweep_points: &[AchievablePoint],
    burn_in: usize,
) -> Result<ConjectureFit> {
    let t_len = trajectory.iterations();
    if schedule.rates().len() != t_len {
        return Err(Error::domain(format!(
            "schedule has {} rates but the trajectory has {t_len} iterations",
            schedule.rates().len()
        )));
    }
    if t_len <= burn_in + 3 {
        return Err(Error::FitUnderdetermined {
            needed: burn_in + 4,
            usable: t_len,
        });
    }
    let mut ts = Vec::new();
    let mut rs = Vec::new();
    for (i, &r) in schedule.rates().iter().enumerate() {
        let t = (i + 1) as f64;
        if (i + 1) >= burn_in {
            ts.push(t);
            rs.push(r);
        }
    }
    let rate_fit = linear_fit(&ts, &rs);

    let mut ets = Vec::new();
    let mut les = Vec::new();
    let mut excluded = 0usize;
    for (i, &e) in trajectory.emse.iter().enumerate() {
        if (i + 1) < burn_in {
            continue;
        }
        if e > 0.0 {
            ets.push((i + 1) as f64);
            les.push(e.log2());
        } else {
            excluded += 1;
        }
    }
    if ets.len() < 3 {
        return Err(Error::FitUnderdetermined {
            needed: 3,
            usable: ets.len(),
        });
    }
    let emse_fit = linear_fit(&ets, &les);

    let cost_scaling = if sweep_points.is_empty() {
        None
    } else {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in sweep_points {
            let emse = p.mse - trajectory.mmse;
            if emse <= 0.0 {
                continue;
            }
            let Some(prov) = &p.provenance else { continue };
            let l = (1.0 / emse).log2();
            xs.push(l * l);
            ys.push(prov.schedule.total_cost());
        }
        if xs.len() < 3 {
            return Err(Error::FitUnderdetermined {
                needed: 3,
                usable: xs.len(),
            });
        }
        let fit = linear_fit(&xs, &ys);
        Some(CostScalingFit {
            slope: fit.slope,
            intercept: fit.intercept,
            r2: fit.r2,
            correlation: correlation(&xs, &ys),
        })
    };

    Ok(ConjectureFit {
        rate_intercept_c4: rate_fit.intercept,
        rate_slope_c5: rate_fit.slope,
        rate_r2: rate_fit.r2,
        emse_decay_c7: -emse_fit.slope,
        emse_prefactor_c8: emse_fit.intercept.exp2(),
        emse_r2: emse_fit.r2,
        emse_points_excluded: excluded,
        cost_scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prior;
    use crate::rd::RdModel;

    fn pt(t: usize, r: f64, m: f64) -> AchievablePoint {
        AchievablePoint::new(t, r, m)
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&pt(3, 10.0, 0.01), &pt(4, 12.0, 0.02)));
        let p = pt(5, 3.0, 0.4);
        assert!(dominates(&p, &p), "dominance is non-strict");
        assert!(!dominates(&pt(3, 14.0, 0.01), &pt(4, 12.0, 0.02)));
    }

    #[test]
    fn filter_keeps_only_non_dominated_points() {
        let single = pareto_filter(&[pt(2, 1.0, 0.5)]).unwrap();
        assert_eq!(single.points.len(), 1);

        // A chain where each point dominates the next: only the minimal one
        // survives.
        let chain = vec![pt(1, 1.0, 0.1), pt(2, 2.0, 0.2), pt(3, 3.0, 0.3)];
        let f = pareto_filter(&chain).unwrap();
        assert_eq!(f.points.len(), 1);
        assert_eq!(f.points[0].iterations, 1);

        // Duplicates collapse.
        let dup = vec![pt(1, 1.0, 0.1), pt(1, 1.0, 0.1)];
        assert_eq!(pareto_filter(&dup).unwrap().points.len(), 1);

        assert!(pareto_filter(&[]).is_err());
    }

    #[test]
    fn filter_output_is_pairwise_non_dominating_and_idempotent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<AchievablePoint> = (0..40)
            .map(|_| {
                pt(
                    rng.random_range(1..20),
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.001..0.1),
                )
            })
            .collect();
        let f = pareto_filter(&pts).unwrap();
        for a in &f.points {
            for b in &f.points {
                if a.coords() != b.coords() {
                    assert!(!dominates(a, b), "{a:?} dominates {b:?}");
                }
            }
        }
        let again = pareto_filter(&f.points).unwrap();
        assert_eq!(again.points.len(), f.points.len());
    }

    #[test]
    fn collinear_points_have_zero_violation() {
        let f = ParetoFrontier {
            points: vec![pt(1, 1.0, 0.3), pt(2, 2.0, 0.2), pt(3, 3.0, 0.1)],
            hull_violation: None,
        };
        let report = convexity_check(&f, 0.02).unwrap();
        assert!(report.hull_violation.abs() < 1e-12);
        assert!(report.pass);
    }

    #[test]
    fn perturbed_point_fails_the_check_and_is_named() {
        // A convex staircase in (T, R) with MSE falling convexly, plus one
        // point pushed 10% up in MSE.
        let mut points: Vec<AchievablePoint> = (0..6)
            .map(|i| {
                let t = i + 1;
                let r = 12.0 - 1.5 * i as f64;
                let m = 0.1 * 0.5f64.powi(i as i32);
                pt(t, r, m)
            })
            .collect();
        points[3].mse *= 1.6;
        let f = ParetoFrontier {
            points,
            hull_violation: None,
        };
        let report = convexity_check(&f, 0.02).unwrap();
        assert!(!report.pass, "violation {}", report.hull_violation);
        assert_eq!(report.worst_point.unwrap().0, 3);
    }

    #[test]
    fn coplanar_inputs_are_handled() {
        // All points on the plane z = 1 - x - y.
        let f = ParetoFrontier {
            points: vec![
                pt(1, 0.0, 0.9),
                pt(2, 1.0, 0.7),
                pt(3, 2.0, 0.5),
                pt(4, 3.0, 0.3),
            ],
            hull_violation: None,
        };
        let report = convexity_check(&f, 1e-6).unwrap();
        assert!(report.pass, "violation {}", report.hull_violation);
    }

    #[test]
    fn synthetic_fits_recover_exact_coefficients() {
        let cost = CostModel::from_relative_cost(1.0).unwrap();
        let rates: Vec<f64> = (1..=20).map(|t| 0.5 + 0.25 * t as f64).collect();
        let schedule = CodingRateSchedule::new(rates, &cost).unwrap();
        let traj = StateTrajectory {
            sigma_sq: vec![1.0; 21],
            effective_sigma_sq: vec![1.0; 20],
            distortion: vec![0.0; 20],
            mse: (1..=20).map(|t| 0.5f64.powi(t) + 0.001).collect(),
            emse: (1..=20).map(|t| 0.5f64.powi(t)).collect(),
            mmse: 0.001,
        };
        let fit = fit_conjecture(&schedule, &traj, &[], 6).unwrap();
        assert!((fit.rate_slope_c5 - 0.25).abs() < 1e-12);
        assert!((fit.rate_intercept_c4 - 0.5).abs() < 1e-12);
        assert!((fit.rate_r2 - 1.0).abs() < 1e-12);
        assert!((fit.emse_decay_c7 - 1.0).abs() < 1e-12);
        assert!((fit.emse_prefactor_c8 - 1.0).abs() < 1e-9);
        assert!((fit.emse_r2 - 1.0).abs() < 1e-12);
        assert!(fit.cost_scaling.is_none());
        assert_eq!(fit.emse_points_excluded, 0);
    }

    #[test]
    fn fit_rejects_short_windows_and_counts_exclusions() {
        let cost = CostModel::from_relative_cost(1.0).unwrap();
        let schedule = CodingRateSchedule::new(vec![1.0; 5], &cost).unwrap();
        let traj = StateTrajectory {
            sigma_sq: vec![1.0; 6],
            effective_sigma_sq: vec![1.0; 5],
            distortion: vec![0.0; 5],
            mse: vec![0.1; 5],
            emse: vec![0.01; 5],
            mmse: 0.09,
        };
        assert!(matches!(
            fit_conjecture(&schedule, &traj, &[], 6),
            Err(Error::FitUnderdetermined { .. })
        ));

        let schedule = CodingRateSchedule::new(vec![1.0; 12], &cost).unwrap();
        let mut emse: Vec<f64> = (1..=12).map(|t| 0.5f64.powi(t)).collect();
        emse[9] = -1e-9; // one bad entry inside the window
        let traj = StateTrajectory {
            sigma_sq: vec![1.0; 13],
            effective_sigma_sq: vec![1.0; 12],
            distortion: vec![0.0; 12],
            mse: emse.iter().map(|e| e + 0.001).collect(),
            emse,
            mmse: 0.001,
        };
        let fit = fit_conjecture(&schedule, &traj, &[], 6).unwrap();
        assert_eq!(fit.emse_points_excluded, 1);
    }

    #[test]
    fn coarse_sweep_produces_monotone_cells() {
        let prior = Prior::bernoulli_gaussian(0.1).unwrap();
        let params = ProblemParams::new(prior, 0.4, 1.0 / 400.0, 100).unwrap();
        let spec = GridSpec {
            sigma_states: 128,
            rate_step: 0.25,
            rate_max: 10.0,
            max_horizon: 80,
        };
        let table = MseTable::new(prior);
        let mm = table.mmse(&params, 1e-12, 10_000).unwrap();
        let deltas: Vec<f64> = [3.0, 5.0].iter().map(|k| k * mm).collect();
        let out = sweep(&params, &[1.0, 2.0], &deltas, &spec, &RdModel::GaussianClosedForm).unwrap();
        assert!(out.failures.is_empty(), "failures: {:?}", out.failures);
        assert_eq!(out.points.len(), 4);
        for p in &out.points {
            let prov = p.provenance.as_ref().unwrap();
            assert!(p.mse <= prov.delta * (1.0 + 1e-9));
            assert!(p.mse >= out.mmse - 1e-12);
        }
        // For each b, the tighter delta needs at least as many iterations
        // and bits.
        for b in [1.0, 2.0] {
            let mut col: Vec<&AchievablePoint> = out
                .points
                .iter()
                .filter(|p| p.provenance.as_ref().unwrap().relative_cost == b)
                .collect();
            col.sort_by(|a, b| {
                a.provenance
                    .as_ref()
                    .unwrap()
                    .delta
                    .partial_cmp(&b.provenance.as_ref().unwrap().delta)
                    .unwrap()
            });
            assert!(col[0].iterations >= col[1].iterations);
            assert!(col[0].aggregate_rate >= col[1].aggregate_rate - 1e-9);
        }
        // Sweep rejects targets below the floor.
        assert!(matches!(
            sweep(&params, &[1.0], &[mm * 0.9], &spec, &RdModel::GaussianClosedForm),
            Err(Error::Infeasible { .. })
        ));
    }
}
