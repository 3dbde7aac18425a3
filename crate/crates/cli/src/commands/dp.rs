//! `mpamp dp`: optimal coding-rate schedule, trajectory CSV, summary JSON.

use serde_json::json;

use mpamp_core::dpopt::{build_policy, recover_schedule, DpGrids};
use mpamp_core::sevo;

use crate::output::{num, write_csv, write_json};
use crate::{Cli, CliError};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (loaded, meta) = super::prepare(cli)?;
    let cfg = &loaded.cfg;
    let params = cfg.params()?;
    let cost = cfg.cost_model()?;
    let (rd_model, rd_desc) = cfg.rd_model()?;
    let spec = cfg.grid_spec();
    let (delta, delta_desc, mmse) = cfg.resolve_delta(&params)?;

    let grids = DpGrids::for_problem_with_mmse(&params, delta, &spec, mmse)?;
    let policy = build_policy(&params, &cost, &grids, &rd_model)?;
    let schedule = recover_schedule(&policy, &params, &grids, &rd_model)?;
    let traj = sevo::se_trajectory(schedule.rates(), &params, &rd_model)?;

    let rows: Vec<Vec<String>> = (0..traj.iterations())
        .map(|t| {
            vec![
                (t + 1).to_string(),
                num(schedule.rates()[t]),
                num(traj.sigma_sq[t]),
                num(traj.distortion[t]),
                num(traj.mse[t]),
                num(traj.emse[t]),
            ]
        })
        .collect();
    let csv_path = write_csv(
        &cli.out,
        "dp_schedule.csv",
        &meta,
        &["t", "rate_bits", "sigma_sq", "distortion", "mse", "emse"],
        &rows,
    )?;

    let summary = json!({
        "config_hash": meta.config_hash,
        "seed": meta.seed,
        "iterations": schedule.iterations(),
        "r_agg": schedule.aggregate_rate(),
        "total_cost": schedule.total_cost(),
        "mmse": mmse,
        "delta_absolute": delta,
        "delta_spec": delta_desc,
        "final_mse": traj.final_mse(),
        "horizon_used": policy.horizon_used,
        "b": cost.relative_cost(),
        "c1": cost.c1(),
        "c2": cost.c2(),
        "rd_model": rd_desc,
        "rzero_convention": "noop",
    });
    let json_path = write_json(&cli.out, "dp_summary.json", &summary)?;
    println!(
        "dp: T={} R_agg={:.3} cost={:.3} final mse {:.6e} (delta {:.6e}) -> {}, {}",
        schedule.iterations(),
        schedule.aggregate_rate(),
        schedule.total_cost(),
        traj.final_mse(),
        delta,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}
