//! `mpamp harness`: replay a schedule on the multi-worker cluster and write
//! the byte ledger.

use std::path::Path;

use mpamp_core::harness::{spawn_cluster, ClusterOptions};
use mpamp_core::model::Prior;
use mpamp_core::sevo::ProblemParams;
use mpamp_core::sim::generate_instance;

use crate::output::{read_schedule_csv, write_csv};
use crate::{Cli, CliError};

pub fn run(
    cli: &Cli,
    nodes_flag: Option<usize>,
    schedule_flag: Option<&Path>,
    transport_flag: Option<&str>,
) -> Result<(), CliError> {
    let (loaded, meta) = super::prepare(cli)?;
    let cfg = &loaded.cfg;
    let nodes = nodes_flag.unwrap_or(cfg.nodes);
    let prior = Prior::bernoulli_gaussian_with_variance(cfg.prior.epsilon, cfg.prior.active_variance)?;
    let params = ProblemParams::new(prior, cfg.kappa, cfg.sigma_z_sq, nodes)?;
    let (rd_model, _) = cfg.rd_model()?;
    let quant_mode = cfg.quant_mode()?;
    let transport = cfg.transport(transport_flag)?;
    let n = cfg
        .n
        .ok_or_else(|| CliError::Config("missing required key `n`".into()))?;
    let rates = match schedule_flag {
        Some(p) => read_schedule_csv(p)?,
        None => {
            let p = cfg
                .schedule_csv
                .as_ref()
                .ok_or_else(|| CliError::Config("missing required key `schedule_csv`".into()))?;
            read_schedule_csv(Path::new(p))?
        }
    };
    if rates.len() > u16::MAX as usize {
        return Err(CliError::Config(format!(
            "schedule of {} rounds exceeds the wire iteration limit",
            rates.len()
        )));
    }
    let seed = cfg.effective_seed(cli.seed);

    let instance = generate_instance(&params, n, seed)?;
    let mut cluster = spawn_cluster(
        &instance,
        nodes,
        ClusterOptions {
            quant_mode,
            rd_model,
            transport,
            ..ClusterOptions::default()
        },
    )?;
    let mut final_mse = f64::NAN;
    for (i, &rate) in rates.iter().enumerate() {
        let out = cluster.run_round((i + 1) as u16, rate)?;
        final_mse = out
            .fused_estimate
            .iter()
            .zip(&instance.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / instance.n() as f64;
    }
    let rows: Vec<Vec<String>> = cluster
        .ledger()
        .rows
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.billed_uplink_bytes.to_string(),
                r.transported_uplink_bytes.to_string(),
                r.downlink_bytes.to_string(),
            ]
        })
        .collect();
    let billed = cluster.ledger().billed_uplink_total();
    let transported = cluster.ledger().transported_uplink_total();
    let stats = cluster.shutdown()?;
    let path = write_csv(
        &cli.out,
        "harness_ledger.csv",
        &meta,
        &["t", "billed_uplink_bytes", "transported_bytes", "downlink_bytes"],
        &rows,
    )?;
    println!(
        "harness: {} rounds on {} nodes ({} frames, {} broadcasts); final mse {:.6e}; billed {} B, transported {} B -> {}",
        rates.len(),
        nodes,
        stats.node_frames,
        stats.broadcasts,
        final_mse,
        billed,
        transported,
        path.display()
    );
    Ok(())
}
