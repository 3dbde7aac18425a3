//! JSON experiment configuration and its mapping onto core types.

use std::path::Path;

use serde::Deserialize;

use mpamp_core::dpopt::{CostModel, GridSpec};
use mpamp_core::harness::Transport;
use mpamp_core::model::Prior;
use mpamp_core::rd::{BaConfig, RdModel};
use mpamp_core::sevo::{self, ProblemParams};
use mpamp_core::sim::QuantMode;

use crate::CliError;

fn default_active_variance() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorCfg {
    pub epsilon: f64,
    #[serde(default = "default_active_variance")]
    pub active_variance: f64,
}

/// Either the relative cost `b` or explicit `(c1, c2)` - exactly one form.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCfg {
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub c1: Option<f64>,
    #[serde(default)]
    pub c2: Option<f64>,
}

/// Final-MSE target: absolute, a multiple of the MMSE, or an excess over it.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaCfg {
    #[serde(default)]
    pub absolute: Option<f64>,
    #[serde(default)]
    pub over_mmse: Option<f64>,
    #[serde(default)]
    pub emse_target: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    #[serde(default)]
    pub sigma_states: Option<usize>,
    #[serde(default)]
    pub rate_step: Option<f64>,
    #[serde(default)]
    pub rate_max: Option<f64>,
    #[serde(default)]
    pub max_horizon: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaCfg {
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub span_sigmas: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RdModelCfg {
    Name(String),
    Ba { blahut_arimoto: BaCfg },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub prior: PriorCfg,
    pub kappa: f64,
    pub sigma_z_sq: f64,
    pub nodes: usize,
    #[serde(default)]
    pub cost: Option<CostCfg>,
    #[serde(default)]
    pub delta: Option<DeltaCfg>,
    #[serde(default)]
    pub grids: Option<GridCfg>,
    #[serde(default)]
    pub rd_model: Option<RdModelCfg>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Trajectory length for lossless state-evolution runs.
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub schedule_csv: Option<String>,
    #[serde(default)]
    pub quant_mode: Option<String>,
    #[serde(default)]
    pub b_list: Option<Vec<f64>>,
    #[serde(default)]
    pub delta_over_mmse_list: Option<Vec<f64>>,
    #[serde(default)]
    pub transport: Option<String>,
    /// State at which the rate-distortion curve is evaluated (defaults to
    /// the initial sigma^2).
    #[serde(default)]
    pub rd_sigma_sq: Option<f64>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub hull_tol: Option<f64>,
}

/// Raw config file bytes plus the parsed form (the bytes feed the hash that
/// output files embed).
pub struct LoadedConfig {
    pub raw: Vec<u8>,
    pub cfg: ExperimentConfig,
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let path = path.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig { raw, cfg })
}

impl ExperimentConfig {
    pub fn params(&self) -> Result<ProblemParams, CliError> {
        let prior = Prior::bernoulli_gaussian_with_variance(self.prior.epsilon, self.prior.active_variance)?;
        Ok(ProblemParams::new(prior, self.kappa, self.sigma_z_sq, self.nodes)?)
    }

    pub fn cost_model(&self) -> Result<CostModel, CliError> {
        let cost = self
            .cost
            .as_ref()
            .ok_or_else(|| CliError::Config("missing required key `cost`".into()))?;
        match (cost.b, cost.c1, cost.c2) {
            (Some(b), None, None) => Ok(CostModel::from_relative_cost(b)?),
            (None, Some(c1), Some(c2)) => Ok(CostModel::from_costs(c1, c2)?),
            _ => Err(CliError::Config(
                "`cost` takes either `b` or both `c1` and `c2`".into(),
            )),
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let d = GridSpec::default();
        match &self.grids {
            None => d,
            Some(g) => GridSpec {
                sigma_states: g.sigma_states.unwrap_or(d.sigma_states),
                rate_step: g.rate_step.unwrap_or(d.rate_step),
                rate_max: g.rate_max.unwrap_or(d.rate_max),
                max_horizon: g.max_horizon.unwrap_or(d.max_horizon),
            },
        }
    }

    pub fn rd_model(&self) -> Result<(RdModel, String), CliError> {
        match &self.rd_model {
            None => Ok((RdModel::GaussianClosedForm, "gaussian".into())),
            Some(RdModelCfg::Name(name)) if name == "gaussian" => {
                Ok((RdModel::GaussianClosedForm, "gaussian".into()))
            }
            Some(RdModelCfg::Name(name)) => Err(CliError::Config(format!(
                "unknown rd_model `{name}` (expected \"gaussian\" or a blahut_arimoto object)"
            ))),
            Some(RdModelCfg::Ba { blahut_arimoto }) => {
                let d = BaConfig::default();
                let cfg = BaConfig {
                    points: blahut_arimoto.points.unwrap_or(d.points),
                    span_sigmas: blahut_arimoto.span_sigmas.unwrap_or(d.span_sigmas),
                    ..d
                };
                Ok((
                    RdModel::BlahutArimoto(cfg),
                    format!("blahut_arimoto(points={},span={})", cfg.points, cfg.span_sigmas),
                ))
            }
        }
    }

    pub fn quant_mode(&self) -> Result<QuantMode, CliError> {
        match self.quant_mode.as_deref() {
            None | Some("gaussian") => Ok(QuantMode::GaussianEmulation),
            Some("lossless") => Ok(QuantMode::Lossless),
            Some("uniform_scalar") => Ok(QuantMode::UniformScalar),
            Some(other) => Err(CliError::Config(format!(
                "unknown quant_mode `{other}` (expected lossless, gaussian, or uniform_scalar)"
            ))),
        }
    }

    pub fn transport(&self, flag: Option<&str>) -> Result<Transport, CliError> {
        match flag.or(self.transport.as_deref()) {
            None | Some("channel") => Ok(Transport::Channel),
            Some("socket") => Ok(Transport::Socket),
            Some(other) => Err(CliError::Config(format!(
                "unknown transport `{other}` (expected channel or socket)"
            ))),
        }
    }

    /// Computes the MMSE and resolves the delta specification against it.
    /// Returns (absolute delta, human-readable form, mmse).
    pub fn resolve_delta(&self, params: &ProblemParams) -> Result<(f64, String, f64), CliError> {
        let delta = self
            .delta
            .as_ref()
            .ok_or_else(|| CliError::Config("missing required key `delta`".into()))?;
        let mmse = sevo::mmse(params, 1e-12, 10_000)?;
        let (abs, desc) = match (delta.absolute, delta.over_mmse, delta.emse_target) {
            (Some(a), None, None) => (a, format!("absolute({a})")),
            (None, Some(k), None) => (k * mmse, format!("over_mmse({k})")),
            (None, None, Some(e)) => (mmse + e, format!("emse_target({e})")),
            _ => {
                return Err(CliError::Config(
                    "`delta` takes exactly one of `absolute`, `over_mmse`, `emse_target`".into(),
                ))
            }
        };
        Ok((abs, desc, mmse))
    }

    pub fn effective_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}
