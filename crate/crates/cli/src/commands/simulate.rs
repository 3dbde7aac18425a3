//! `mpamp simulate`: Monte Carlo MP-AMP trials with the SE prediction
//! alongside.

use mpamp_core::sevo;
use mpamp_core::sim::{generate_instance, run_mpamp};

use crate::output::{num, read_schedule_csv, write_csv};
use crate::{Cli, CliError};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (loaded, meta) = super::prepare(cli)?;
    let cfg = &loaded.cfg;
    let params = cfg.params()?;
    let (rd_model, _) = cfg.rd_model()?;
    let quant_mode = cfg.quant_mode()?;
    let n = cfg
        .n
        .ok_or_else(|| CliError::Config("missing required key `n`".into()))?;
    let trials = cfg.trials.unwrap_or(1);
    let schedule_path = cfg
        .schedule_csv
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `schedule_csv`".into()))?;
    let rates = read_schedule_csv(std::path::Path::new(schedule_path))?;
    let seed = cfg.effective_seed(cli.seed);

    let traj = sevo::se_trajectory(&rates, &params, &rd_model)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut final_sum = 0.0;
    for trial in 0..trials {
        let instance = generate_instance(&params, n, seed.wrapping_add(trial as u64))?;
        let rec = run_mpamp(&instance, &rates, quant_mode, &rd_model)?;
        for t in 0..rec.mse.len() {
            rows.push(vec![
                trial.to_string(),
                (t + 1).to_string(),
                num(rec.mse[t]),
                num(traj.mse[t]),
                num(rec.sigma_hat_sq[t]),
                rec.billed_uplink_bytes[t].to_string(),
            ]);
        }
        final_sum += rec.mse.last().unwrap();
    }
    let path = write_csv(
        &cli.out,
        "runrecord.csv",
        &meta,
        &["trial", "t", "mse_empirical", "mse_se", "sigma_hat_sq", "bytes_billed"],
        &rows,
    )?;
    println!(
        "simulate: {trials} trials x {} iterations at N={n}; mean final mse {:.6e} (SE {:.6e}) -> {}",
        rates.len(),
        final_sum / trials as f64,
        traj.final_mse(),
        path.display()
    );
    Ok(())
}
