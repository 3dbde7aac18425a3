//! `mpamp rd`: swept (rate, distortion) pairs of the per-node message source.

use mpamp_core::rd::{self, RdModel};

use crate::output::{num, write_csv};
use crate::{Cli, CliError};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (loaded, meta) = super::prepare(cli)?;
    let cfg = &loaded.cfg;
    let params = cfg.params()?;
    let (rd_model, _) = cfg.rd_model()?;
    let spec = cfg.grid_spec();
    let sigma_sq = cfg.rd_sigma_sq.unwrap_or_else(|| params.initial_sigma_sq());
    let source_variance = rd::per_node_source_variance(sigma_sq, &params)?;

    let points: Vec<rd::RdPoint> = match rd_model {
        RdModel::GaussianClosedForm => {
            let steps = (spec.rate_max / spec.rate_step).floor() as usize;
            (0..=steps)
                .map(|i| {
                    let rate = i as f64 * spec.rate_step;
                    Ok(rd::RdPoint {
                        rate_bits: rate,
                        distortion: rd::gaussian_rate_to_distortion(rate, source_variance)?,
                    })
                })
                .collect::<Result<_, CliError>>()?
        }
        RdModel::BlahutArimoto(ba_cfg) => {
            let source = rd::node_message_source(source_variance, &params, &ba_cfg)?;
            rd::ba_sweep(&source, 24, &ba_cfg)?
        }
    };
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![num(p.rate_bits), num(p.distortion)])
        .collect();
    let path = write_csv(&cli.out, "rd_curve.csv", &meta, &["rate_bits", "distortion"], &rows)?;
    println!(
        "rd: {} points at sigma_sq={} (source variance {:.6e}) -> {}",
        rows.len(),
        sigma_sq,
        source_variance,
        path.display()
    );
    Ok(())
}
