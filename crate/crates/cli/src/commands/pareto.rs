//! `mpamp pareto`: sweep over (b, delta), frontier + convexity + fits.

use serde_json::json;

use mpamp_core::pareto::{convexity_check, fit_conjecture, pareto_filter, sweep, AchievablePoint};
use mpamp_core::sevo;
use mpamp_core::Error as CoreError;

use crate::output::{num, write_csv, write_json};
use crate::{Cli, CliError};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (loaded, meta) = super::prepare(cli)?;
    let cfg = &loaded.cfg;
    let params = cfg.params()?;
    let (rd_model, _) = cfg.rd_model()?;
    let spec = cfg.grid_spec();
    let b_list = cfg
        .b_list
        .clone()
        .ok_or_else(|| CliError::Config("missing required key `b_list`".into()))?;
    let over_mmse = cfg
        .delta_over_mmse_list
        .clone()
        .ok_or_else(|| CliError::Config("missing required key `delta_over_mmse_list`".into()))?;
    let burn_in = cfg.burn_in.unwrap_or(6);
    let hull_tol = cfg.hull_tol.unwrap_or(0.02);

    let mmse = sevo::mmse(&params, 1e-12, 10_000)?;
    let deltas: Vec<f64> = over_mmse.iter().map(|k| k * mmse).collect();
    let outcome = sweep(&params, &b_list, &deltas, &spec, &rd_model)?;

    let point_rows: Vec<Vec<String>> = outcome
        .points
        .iter()
        .map(|p| {
            let prov = p.provenance.as_ref().expect("sweep points carry provenance");
            vec![
                num(prov.relative_cost),
                num(prov.delta / mmse),
                p.iterations.to_string(),
                num(p.aggregate_rate),
                num(p.mse),
                num(p.mse - mmse),
                num(prov.schedule.total_cost()),
            ]
        })
        .collect();
    let points_path = write_csv(
        &cli.out,
        "points.csv",
        &meta,
        &["b", "delta_over_mmse", "T", "R_agg", "mse", "emse", "total_cost"],
        &point_rows,
    )?;

    let frontier = pareto_filter(&outcome.points)?;
    let report = convexity_check(&frontier, hull_tol)?;

    // Per-b fits on the deepest (smallest-delta) run of that column.
    let mut fit_rows: Vec<Vec<String>> = Vec::new();
    for &b in &b_list {
        let col: Vec<AchievablePoint> = outcome
            .points
            .iter()
            .filter(|p| p.provenance.as_ref().unwrap().relative_cost == b)
            .cloned()
            .collect();
        let Some(deepest) = col.iter().min_by(|x, y| {
            x.provenance
                .as_ref()
                .unwrap()
                .delta
                .partial_cmp(&y.provenance.as_ref().unwrap().delta)
                .unwrap()
        }) else {
            continue;
        };
        let schedule = &deepest.provenance.as_ref().unwrap().schedule;
        let traj = sevo::se_trajectory(schedule.rates(), &params, &rd_model)?;
        match fit_conjecture(schedule, &traj, &col, burn_in) {
            Ok(fit) => {
                let cost = fit.cost_scaling.expect("nonempty sweep column");
                fit_rows.push(vec![
                    num(b),
                    num(fit.rate_intercept_c4),
                    num(fit.rate_slope_c5),
                    num(fit.rate_r2),
                    num(fit.emse_decay_c7),
                    num(fit.emse_prefactor_c8),
                    num(fit.emse_r2),
                    num(cost.slope),
                    num(cost.intercept),
                    num(cost.r2),
                    num(cost.correlation),
                ]);
            }
            Err(CoreError::FitUnderdetermined { .. }) => {
                // Too few tail iterations at this b; leave the row out.
            }
            Err(e) => return Err(e.into()),
        }
    }
    let fits_path = write_csv(
        &cli.out,
        "fits.csv",
        &meta,
        &[
            "b",
            "c4",
            "c5",
            "rate_r2",
            "c7",
            "c8",
            "emse_r2",
            "cost_slope",
            "cost_intercept",
            "cost_r2",
            "cost_corr",
        ],
        &fit_rows,
    )?;

    let summary = json!({
        "config_hash": meta.config_hash,
        "seed": meta.seed,
        "mmse": mmse,
        "points": outcome.points.len(),
        "failures": outcome
            .failures
            .iter()
            .map(|f| json!({"b": f.relative_cost, "delta": f.delta, "error": f.message}))
            .collect::<Vec<_>>(),
        "frontier_points": frontier.points.len(),
        "hull_violation": report.hull_violation,
        "hull_tol": report.tol,
        "convexity_pass": report.pass,
        "rzero_convention": "noop",
    });
    let summary_path = write_json(&cli.out, "pareto_summary.json", &summary)?;
    println!(
        "pareto: {} points ({} failures), frontier {} points, hull violation {:.4} (tol {hull_tol}) -> {}, {}, {}",
        outcome.points.len(),
        outcome.failures.len(),
        frontier.points.len(),
        report.hull_violation,
        points_path.display(),
        fits_path.display(),
        summary_path.display()
    );
    Ok(())
}
