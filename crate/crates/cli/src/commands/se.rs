//! `mpamp se`: state-evolution trajectory CSV.

use mpamp_core::sevo;

use crate::output::{num, read_schedule_csv, write_csv};
use crate::{Cli, CliError};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (loaded, meta) = super::prepare(cli)?;
    let cfg = &loaded.cfg;
    let params = cfg.params()?;
    let (rd_model, _) = cfg.rd_model()?;
    let rates: Vec<f64> = match &cfg.schedule_csv {
        Some(path) => read_schedule_csv(std::path::Path::new(path))?,
        None => vec![f64::INFINITY; cfg.iterations.unwrap_or(300)],
    };
    let traj = sevo::se_trajectory(&rates, &params, &rd_model)?;
    let rows: Vec<Vec<String>> = (0..traj.iterations())
        .map(|t| {
            vec![
                (t + 1).to_string(),
                num(traj.sigma_sq[t]),
                num(traj.distortion[t]),
                num(traj.mse[t]),
                num(traj.emse[t]),
            ]
        })
        .collect();
    let path = write_csv(
        &cli.out,
        "se_trajectory.csv",
        &meta,
        &["t", "sigma_sq", "distortion", "mse", "emse"],
        &rows,
    )?;
    println!(
        "se: {} iterations, final mse {:.6e} (emse {:.3e}, mmse {:.6e}) -> {}",
        traj.iterations(),
        traj.final_mse(),
        traj.emse.last().unwrap(),
        traj.mmse,
        path.display()
    );
    Ok(())
}
