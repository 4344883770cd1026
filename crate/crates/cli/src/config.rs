//! Experiment configuration: one JSON document per run, validated in full
//! before anything is computed.

use std::path::{Path, PathBuf};

use concentra_core::deform::{SeminormParams, SmalldevConfig, UpsilonParams};
use concentra_core::positions::ContractionParams;
use concentra_core::smallball::{Anchor, Engine, Family, SplittingConfig};
use concentra_core::{McConfig, NormSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Profile,
    Semigroup,
    Position,
    Smallball,
    Scaling,
    Deform,
    Accept,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Semigroup => "semigroup",
            Command::Position => "position",
            Command::Smallball => "smallball",
            Command::Scaling => "scaling",
            Command::Deform => "deform",
            Command::Accept => "accept",
        }
    }

    fn needs_norm(&self) -> bool {
        !matches!(self, Command::Scaling | Command::Accept)
    }
}

/// The raw configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must agree with the subcommand when present.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub norm: Option<NormSpec>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileParams {
    /// Use closed forms where the family has them.
    pub exact: bool,
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams { exact: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupParams {
    pub t_grid: Vec<f64>,
    /// Nested budgets; derived from the sample count when absent.
    pub nested: Option<concentra_core::ou::Nested>,
    /// Times at which hypercontractivity is checked for f − E f.
    pub hyper_t: Vec<f64>,
}

impl Default for SemigroupParams {
    fn default() -> Self {
        SemigroupParams {
            t_grid: vec![0.0, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0],
            nested: None,
            hyper_t: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositionParams {
    pub tol: f64,
    pub max_iter: usize,
    /// Run the diagonal contraction flow on the balanced norm as well.
    pub contraction: Option<ContractionParams>,
}

impl Default for PositionParams {
    fn default() -> Self {
        PositionParams { tol: 0.02, max_iter: 200, contraction: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallballEngine {
    Exact,
    Naive,
    Splitting,
}

impl SmallballEngine {
    pub fn name(&self) -> &'static str {
        match self {
            SmallballEngine::Exact => "exact",
            SmallballEngine::Naive => "naive",
            SmallballEngine::Splitting => "splitting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallballParams {
    pub delta: Vec<f64>,
    #[serde(default)]
    pub anchor: Anchor,
    #[serde(default = "default_sb_engine")]
    pub engine: SmallballEngine,
    /// Seed and thread count are taken from the run, not from this block.
    #[serde(default)]
    pub splitting: SplittingConfig,
}

fn default_sb_engine() -> SmallballEngine {
    SmallballEngine::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    pub family: Family,
    pub delta: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_scaling_engine")]
    pub engine: Engine,
    #[serde(default)]
    pub splitting: SplittingConfig,
}

fn default_scaling_engine() -> Engine {
    Engine::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeformParams {
    /// θ-balancing of Υ; writes the trace and the kept-functional store.
    Balance { upsilon: UpsilonParams },
    /// Full small-deviation pipeline at level ε.
    Smalldev {
        epsilon: f64,
        #[serde(default)]
        config: SmalldevConfig,
    },
    /// Truncated-functional seminorm and its contraction.
    Seminorm {
        #[serde(default)]
        seminorm: SeminormParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptParams {
    /// Criteria to run; all of them when empty.
    pub only: Vec<u32>,
}

impl Default for AcceptParams {
    fn default() -> Self {
        AcceptParams { only: Vec::new() }
    }
}

/// Typed parameter block for one command.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Profile(ProfileParams),
    Semigroup(SemigroupParams),
    Position(PositionParams),
    Smallball(SmallballParams),
    Scaling(ScalingParams),
    Deform(DeformParams),
    Accept(AcceptParams),
}

/// A fully validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub command: Command,
    pub norm: Option<NormSpec>,
    pub mc: McConfig,
    pub threads: usize,
    pub params: Params,
    pub out: PathBuf,
}

fn typed<T: DeserializeOwned + Default>(v: &serde_json::Value) -> Result<T, CliError> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("params: {e}")))
}

fn required<T: DeserializeOwned>(v: &serde_json::Value) -> Result<T, CliError> {
    if v.is_null() {
        return Err(CliError::Config("params block is required for this command".into()));
    }
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("params: {e}")))
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// Merges flags into the file and checks every parameter.
pub fn resolve(command: Command, file: ExperimentConfig, ov: &Overrides) -> Result<Run, CliError> {
    if let Some(c) = file.command {
        if c != command {
            return Err(CliError::Config(format!(
                "config is for `{}` but `{}` was requested",
                c.name(),
                command.name()
            )));
        }
    }
    if command.needs_norm() && file.norm.is_none() {
        return Err(CliError::Config(format!("`{}` needs a norm", command.name())));
    }
    let mut mc = file.mc;
    if let Some(s) = ov.seed {
        mc.seed = s;
    }
    if let Some(n) = ov.samples {
        mc.samples = n;
    }
    let threads = ov.threads.unwrap_or(mc.streams).max(1);
    mc.streams = threads;
    if mc.samples == 0 || mc.batch == 0 {
        return Err(CliError::Config("mc.samples and mc.batch must be positive".into()));
    }
    let p = &file.params;
    let params = match command {
        Command::Profile => Params::Profile(typed(p)?),
        Command::Semigroup => {
            let sp: SemigroupParams = typed(p)?;
            if sp.t_grid.first() != Some(&0.0) || sp.t_grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::Config("t_grid must start at 0 and increase".into()));
            }
            if sp.hyper_t.iter().any(|&t| !(t > 0.0)) {
                return Err(CliError::Config("hyper_t entries must be positive".into()));
            }
            Params::Semigroup(sp)
        }
        Command::Position => {
            let mut pp: PositionParams = typed(p)?;
            if let Some(t) = ov.tol {
                pp.tol = t;
            }
            if let Some(m) = ov.max_iter {
                pp.max_iter = m;
            }
            if !(pp.tol > 0.0 && pp.tol < 0.5) {
                return Err(CliError::Config("tol must lie in (0, 0.5)".into()));
            }
            Params::Position(pp)
        }
        Command::Smallball => {
            let mut sp: SmallballParams = required(p)?;
            if sp.delta.is_empty() || sp.delta.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
                return Err(CliError::Config("delta entries must lie in (0, 1)".into()));
            }
            sp.splitting.seed = mc.seed;
            sp.splitting.threads = threads;
            sp.splitting.validate().map_err(|e| CliError::Config(e.to_string()))?;
            Params::Smallball(sp)
        }
        Command::Scaling => {
            let mut sp: ScalingParams = required(p)?;
            sp.splitting.seed = mc.seed;
            sp.splitting.threads = threads;
            sp.splitting.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if sp.n_list.len() < 4 || sp.n_list.iter().any(|n| !n.is_power_of_two()) {
                return Err(CliError::Config("n_list needs at least four powers of two".into()));
            }
            if !(sp.delta > 0.0 && sp.delta < 1.0) {
                return Err(CliError::Config("delta must lie in (0, 1)".into()));
            }
            Params::Scaling(sp)
        }
        Command::Deform => {
            let mut dp: DeformParams = required(p)?;
            let n = file.norm.as_ref().map_or(0, |s| s.dim());
            match &mut dp {
                DeformParams::Balance { upsilon } => {
                    upsilon.validate(n).map_err(|e| CliError::Config(e.to_string()))?;
                }
                DeformParams::Smalldev { epsilon, config } => {
                    if !(*epsilon > 0.0 && *epsilon <= 0.5) {
                        return Err(CliError::Config("epsilon must lie in (0, 1/2]".into()));
                    }
                    config.splitting.seed = mc.seed;
                    config.splitting.threads = threads;
                    config.splitting.validate().map_err(|e| CliError::Config(e.to_string()))?;
                }
                DeformParams::Seminorm { .. } => {}
            }
            Params::Deform(dp)
        }
        Command::Accept => {
            let ap: AcceptParams = typed(p)?;
            if ap.only.iter().any(|&i| !(1..=11).contains(&i)) {
                return Err(CliError::Config("criteria are numbered 1 to 11".into()));
            }
            Params::Accept(ap)
        }
    };
    let out = ov.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("."));
    Ok(Run { command, norm: file.norm, mc, threads, params, out })
}
