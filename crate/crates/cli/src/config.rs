//! Command-line and config-file parsing.
//!
//! Values are layered: built-in defaults, then the TOML file given with
//! `--config`, then individual flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dqkd::channel::{ChannelConfig, ChannelOrder, EveStrategy};
use dqkd::protocol::{Mode, SessionConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{flag}: {message}")]
    Invalid { flag: &'static str, message: String },
    #[error("cannot read config file {path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{0}")]
    Conflict(String),
}

fn invalid(flag: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        flag,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Ent,
    Pm,
    Ekert,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ent => Mode::Ent,
            ModeArg::Pm => Mode::Pm,
            ModeArg::Ekert => Mode::Ekert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EveArg {
    None,
    IrBoth,
    IrPhoton2,
}

impl From<EveArg> for EveStrategy {
    fn from(e: EveArg) -> Self {
        match e {
            EveArg::None => EveStrategy::None,
            EveArg::IrBoth => EveStrategy::InterceptResendBoth,
            EveArg::IrPhoton2 => EveStrategy::InterceptResendPhoton2,
        }
    }
}

/// Session options shared by `run`, `net` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct SessionArgs {
    /// TOML file with any of the options below (snake_case keys)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Protocol variant [default: ent]
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of rounds [default: 100000]
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-photon detection probability [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Per-qubit Pauli error probability [default: 0.0]
    #[arg(long = "pauli-p", allow_negative_numbers = true)]
    pub pauli_p: Option<f64>,
    /// Eavesdropper [default: none]
    #[arg(long, value_enum)]
    pub eve: Option<EveArg>,
    /// Fraction of sifted rounds disclosed for testing [default: 0.1]
    #[arg(long = "reveal-frac", allow_negative_numbers = true)]
    pub reveal_frac: Option<f64>,
    /// Bell statistic threshold, strictly between 7 and 9 [default: 8.0]
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Let Eve act before the channel noise instead of after it
    #[arg(long = "eve-before-noise")]
    pub eve_before_noise: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<ModeArg>,
    pub rounds: Option<u64>,
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub pauli_p: Option<f64>,
    pub eve: Option<EveArg>,
    pub reveal_frac: Option<f64>,
    pub threshold: Option<f64>,
    pub eve_before_noise: Option<bool>,
    pub output: Option<PathBuf>,
}

/// Everything a command needs besides its own flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub session: SessionConfig,
    /// Report path from the config file; the `--output` flag wins.
    pub output: Option<PathBuf>,
}

pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let file_err = |message: String| ConfigError::File {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    toml::from_str(&text).map_err(|e| file_err(e.to_string()))
}

fn unit_interval(flag: &'static str, value: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(invalid(flag, format!("{value} is outside [0, 1]")))
    }
}

pub fn parse_config(args: &SessionArgs) -> Result<Config, ConfigError> {
    let file = match &args.config {
        Some(path) => load_file(path)?,
        None => FileConfig::default(),
    };
    let defaults = SessionConfig::default();

    let mode: Mode = args
        .mode
        .or(file.mode)
        .map(Into::into)
        .unwrap_or(defaults.mode);
    let rounds = args.rounds.or(file.rounds).unwrap_or(defaults.rounds);
    if rounds == 0 {
        return Err(invalid("--rounds", "must be at least 1"));
    }
    let eta = unit_interval(
        "--eta",
        args.eta.or(file.eta).unwrap_or(defaults.channel.eta),
    )?;
    let pauli_p = unit_interval(
        "--pauli-p",
        args.pauli_p
            .or(file.pauli_p)
            .unwrap_or(defaults.channel.pauli_p),
    )?;
    let reveal_frac = unit_interval(
        "--reveal-frac",
        args.reveal_frac
            .or(file.reveal_frac)
            .unwrap_or(defaults.reveal_frac),
    )?;
    let threshold = args
        .threshold
        .or(file.threshold)
        .unwrap_or(defaults.threshold);
    if !(threshold > 7.0 && threshold < 9.0) {
        return Err(invalid(
            "--threshold",
            format!("{threshold} is outside (7, 9)"),
        ));
    }
    let eve: EveStrategy = args
        .eve
        .or(file.eve)
        .map(Into::into)
        .unwrap_or(defaults.channel.eve);
    let order = if args.eve_before_noise || file.eve_before_noise.unwrap_or(false) {
        ChannelOrder::EveThenNoise
    } else {
        ChannelOrder::NoiseThenEve
    };

    let session = SessionConfig {
        mode,
        rounds,
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        channel: ChannelConfig {
            eta,
            pauli_p,
            eve,
            order,
        },
        reveal_frac,
        threshold,
    };
    // remaining checks are combinations, e.g. --eve ir-both with --mode pm
    session
        .validate()
        .map_err(|e| ConfigError::Conflict(format!("--mode/--eve: {e}")))?;
    Ok(Config {
        session,
        output: file.output,
    })
}
