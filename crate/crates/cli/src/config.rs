//! Flags, experiment files and error classes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwolab_core::lifelaw::ModelConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "gwolab", version, about = "Critical Galton-Watson processes with overlapping generations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Summarize,
    Dp,
    Fdd,
    Simulate,
    Limit,
    Figure1,
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived parameters b, a, d, h, c of a model.
    Summarize(Params),
    /// Survival probabilities Q(t) for t <= tmax, or t Q_k(t) along --times with --y/--z.
    Dp(Params),
    /// Joint generating function at --times/--z, or the joint pmf with --K.
    Fdd(Params),
    /// Monte Carlo replicates observed at --times.
    Simulate(Params),
    /// Limit-process pgf at --y/--z, or its joint pmf with --K.
    Limit(Params),
    /// Densities of T and T0 on a grid.
    Figure1(Params),
    /// Cross-checks between the DP, the simulator and the limit law.
    Verify(Params),
}

impl Command {
    pub fn split(self) -> (CommandName, Params) {
        match self {
            Self::Summarize(p) => (CommandName::Summarize, p),
            Self::Dp(p) => (CommandName::Dp, p),
            Self::Fdd(p) => (CommandName::Fdd, p),
            Self::Simulate(p) => (CommandName::Simulate, p),
            Self::Limit(p) => (CommandName::Limit, p),
            Self::Figure1(p) => (CommandName::Figure1, p),
            Self::Verify(p) => (CommandName::Verify, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Oracle,
    Convergence,
    Fdd,
    Survival,
    Dichotomy,
}

/// Flags shared by all subcommands; each overrides the matching key of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Params {
    /// Experiment file (JSON); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tmax: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub y: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub z: Option<Vec<f64>>,
    /// Truncation: total degree of the pmf.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Condition on survival: keep this many surviving replicates.
    #[arg(long)]
    pub survivors: Option<u64>,
    /// Conditioning time (defaults to the last observation time).
    #[arg(long)]
    pub condition_at: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Never changes results.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Limit-process parameter; taken from --model when absent.
    #[arg(long)]
    pub c: Option<f64>,
    /// Grid step for figure1.
    #[arg(long)]
    pub grid: Option<f64>,
    /// Right end of the figure1 grid.
    #[arg(long)]
    pub ymax: Option<f64>,
    /// Which verification to run.
    #[arg(long, value_enum)]
    pub check: Option<Check>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Model given inline or as a path to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Inline(ModelConfig),
    File(PathBuf),
}

/// An experiment manifest; also the form of the config echo.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tmax: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, rename = "K", alias = "k", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survivors: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ymax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `--config` (if any), applies flag overrides and inlines the model file.
    pub fn resolve(command: CommandName, params: Params) -> Result<Self, CliError> {
        let mut cfg = match &params.config {
            Some(path) => Self::from_json(&read(path)?)?,
            None => Self::default(),
        };
        if cfg.command.is_some_and(|c| c != command) {
            return Err(CliError::Config(format!("config is for {:?}, not {command:?}", cfg.command.unwrap())));
        }
        cfg.command = Some(command);
        macro_rules! overlay {
            ($($f:ident),*) => { $( if params.$f.is_some() { cfg.$f = params.$f; } )* };
        }
        overlay!(tmax, times, y, z, k, replicates, survivors, condition_at, seed, threads, c, grid, ymax, check, out, format);
        if let Some(path) = params.model {
            cfg.model = Some(ModelSource::File(path));
        }
        if let Some(ModelSource::File(path)) = &cfg.model {
            let base = params.config.as_deref().and_then(Path::parent).filter(|_| path.is_relative());
            let full = match base {
                Some(dir) if !path.exists() => dir.join(path),
                _ => path.clone(),
            };
            cfg.model = Some(ModelSource::Inline(ModelConfig::from_json(&read(&full)?)?));
        }
        Ok(cfg)
    }

    pub fn model_config(&self) -> Result<&ModelConfig, CliError> {
        match &self.model {
            Some(ModelSource::Inline(m)) => Ok(m),
            Some(ModelSource::File(p)) => Err(CliError::Config(format!("model file {} was not loaded", p.display()))),
            None => Err(CliError::Config("a model is required (--model FILE)".into())),
        }
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Failures of a run; each class has its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] gwolab_core::Error),
}

impl CliError {
    /// 1: verification failed (not an error); 2: usage (clap); 3: config; 4: i/o; 10+: library errors.
    pub fn exit_code(&self) -> u8 {
        use gwolab_core::Error as E;
        match self {
            Self::Config(_) => 3,
            Self::Io(_) => 4,
            Self::Core(e) => match e {
                E::InvalidModel(_) => 10,
                E::DivergentMoment(_) => 11,
                E::ShapeMismatch(..) => 12,
                E::NonpositiveConstantTerm(_) => 13,
                E::UnsupportedModel(_) => 14,
                E::InvalidQuery(_) => 15,
                E::ZeroConditioningEvent(_) => 16,
                E::CapTooLarge(_) => 17,
                E::PopulationOverflow(_) => 18,
                E::BudgetExhausted { .. } => 19,
                E::OracleBlowup(_) => 20,
            },
        }
    }
}
