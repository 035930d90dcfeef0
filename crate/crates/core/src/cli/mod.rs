//! Experiment configuration and orchestration behind the `superproc` binary.
//!
//! Configuration is layered: command-line flags override a `key=value` file,
//! which overrides built-in defaults. The master seed is mandatory.

mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, Regime};

pub use run::{run, Check, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    KernelTable,
    StableCheck,
    LaplaceDuality,
    Compensator,
    JumpTail,
    Dichotomy,
    Exponents,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::KernelTable,
        Self::StableCheck,
        Self::LaplaceDuality,
        Self::Compensator,
        Self::JumpTail,
        Self::Dichotomy,
        Self::Exponents,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::KernelTable => "kernel-table",
            Self::StableCheck => "stable-check",
            Self::LaplaceDuality => "laplace-duality",
            Self::Compensator => "compensator",
            Self::JumpTail => "jump-tail",
            Self::Dichotomy => "dichotomy",
            Self::Exponents => "exponents",
        }
    }

    /// Regime flags checked before any computation.
    pub fn required_regimes(self) -> &'static [Regime] {
        match self {
            Self::LaplaceDuality | Self::Dichotomy => &[Regime::Density],
            Self::JumpTail => &[Regime::Continuity],
            Self::Exponents => &[Regime::Continuity, Regime::Optimality],
            Self::KernelTable | Self::StableCheck | Self::Compensator => &[],
        }
    }

    fn simulates_particles(self) -> bool {
        !matches!(self, Self::KernelTable | Self::StableCheck)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse {
                key: "experiment".into(),
                message: format!("unknown experiment '{s}'"),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub n_particles: usize,
    pub replicates: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.alpha, self.beta, self.a, self.b)
    }

    /// Field and regime checks; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        params.require(self.experiment.required_regimes())?;
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::Config("t must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.experiment.simulates_particles() && self.n_particles < 1000 {
            return Err(Error::Config("n_particles must be at least 1000".into()));
        }
        Ok(())
    }
}

/// Flags shared by every subcommand; each overrides the same key in `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// `key=value` configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Motion index in (0, 2] [default: 1.8]
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Branching index in (0, 1) [default: 0.5]
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Linear growth rate [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Branching coefficient [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Time horizon [default: 1]
    #[arg(long)]
    pub t: Option<f64>,
    /// Population scale N [default: 10000]
    #[arg(long)]
    pub n_particles: Option<usize>,
    /// Number of replicates [default: 100]
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Master seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: out/<experiment>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "superproc", version, about = "Superprocess simulation and verification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the stable transition density p_1 on [-10, 10]
    KernelTable(Flags),
    /// Laplace transform and martingale checks for the spectrally positive process of index 1+β
    StableCheck(Flags),
    /// Monte Carlo Laplace functional against the log-Laplace PDE
    LaplaceDuality(Flags),
    /// Jump counts against the compensator, plus total-mass checks
    Compensator(Flags),
    /// Jump-mass envelope event probabilities
    JumpTail(Flags),
    /// Maximal density across population scales
    Dichotomy(Flags),
    /// Pointwise and local Hölder exponents of the density
    Exponents(Flags),
}

impl Command {
    pub fn split(self) -> (ExperimentKind, Flags) {
        match self {
            Self::KernelTable(f) => (ExperimentKind::KernelTable, f),
            Self::StableCheck(f) => (ExperimentKind::StableCheck, f),
            Self::LaplaceDuality(f) => (ExperimentKind::LaplaceDuality, f),
            Self::Compensator(f) => (ExperimentKind::Compensator, f),
            Self::JumpTail(f) => (ExperimentKind::JumpTail, f),
            Self::Dichotomy(f) => (ExperimentKind::Dichotomy, f),
            Self::Exponents(f) => (ExperimentKind::Exponents, f),
        }
    }
}

const KEYS: [&str; 11] = [
    "experiment",
    "alpha",
    "beta",
    "a",
    "b",
    "t",
    "n_particles",
    "replicates",
    "seed",
    "out",
    "workers",
];

/// Parses `key = value` lines; `#` starts a comment. Dashes in keys are
/// read as underscores.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            key: format!("line {}", lineno + 1),
            message: "expected key=value".into(),
        })?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Parse {
                key,
                message: format!("unknown key (line {})", lineno + 1),
            });
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Parse {
                key,
                message: format!("duplicate key (line {})", lineno + 1),
            });
        }
    }
    Ok(map)
}

fn typed<T: FromStr>(file: &BTreeMap<String, String>, key: &str, what: &str) -> Result<Option<T>> {
    match file.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| Error::Parse {
            key: key.into(),
            message: format!("expected {what}, found '{v}'"),
        }),
    }
}

/// Layers `flags` over `file` over defaults; `kind` wins over the file's
/// `experiment` key.
pub fn build_config(
    kind: Option<ExperimentKind>,
    file: &BTreeMap<String, String>,
    flags: &Flags,
) -> Result<ExperimentConfig> {
    let experiment = match kind {
        Some(k) => k,
        None => match file.get("experiment") {
            Some(v) => v.parse()?,
            None => {
                return Err(Error::Parse {
                    key: "experiment".into(),
                    message: "missing required field".into(),
                })
            }
        },
    };
    let num = |key: &str, flag: Option<f64>, default: f64| -> Result<f64> {
        Ok(flag.or(typed(file, key, "a number")?).unwrap_or(default))
    };
    let count = |key: &str, flag: Option<usize>, default: usize| -> Result<usize> {
        Ok(flag.or(typed(file, key, "a non-negative integer")?).unwrap_or(default))
    };
    let seed = flags
        .seed
        .or(typed(file, "seed", "an unsigned integer")?)
        .ok_or_else(|| Error::Parse {
            key: "seed".into(),
            message: "missing required field".into(),
        })?;
    let out = flags
        .out
        .clone()
        .or_else(|| file.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    Ok(ExperimentConfig {
        experiment,
        alpha: num("alpha", flags.alpha, 1.8)?,
        beta: num("beta", flags.beta, 0.5)?,
        a: num("a", flags.a, 0.0)?,
        b: num("b", flags.b, 1.0)?,
        t: num("t", flags.t, 1.0)?,
        n_particles: count("n_particles", flags.n_particles, 10_000)?,
        replicates: count("replicates", flags.replicates, 100)?,
        seed,
        out,
        workers: count("workers", flags.workers, 1)?,
    })
}

/// Reads the optional config file, layers the flags on top and validates.
pub fn parse_config(kind: ExperimentKind, flags: &Flags) -> Result<ExperimentConfig> {
    let file = match &flags.config {
        Some(path) => parse_config_text(&read_config(path)?)?,
        None => BTreeMap::new(),
    };
    let cfg = build_config(Some(kind), &file, flags)?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse {
        key: path.display().to_string(),
        message: format!("cannot read config file: {e}"),
    })
}
