pub mod dp;
pub mod harness;
pub mod pareto;
pub mod rd;
pub mod se;
pub mod simulate;

use crate::config::{load, LoadedConfig};
use crate::output::{config_hash, Meta};
use crate::{Cli, CliError};

/// Loads the config and assembles the reproducibility header.
pub fn prepare(cli: &Cli) -> Result<(LoadedConfig, Meta), CliError> {
    let loaded = load(cli.config.as_deref())?;
    let (_, rd_desc) = loaded.cfg.rd_model()?;
    let meta = Meta {
        config_hash: config_hash(&loaded.raw),
        seed: loaded.cfg.effective_seed(cli.seed),
        rd_model: rd_desc,
    };
    Ok((loaded, meta))
}
