//! Command-line driver: configuration, subcommands and output files.
//!
//! Exit status: 0 when every check passes, 1 on a check failure or runtime
//! error, 2 on a configuration error.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] kclg_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Model(
                kclg_core::Error::InvalidParams(_)
                | kclg_core::Error::InvalidInput(_)
                | kclg_core::Error::InvalidBox { .. }
                | kclg_core::Error::UnknownTerm(_),
            ) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kclg", version, about = "Kinetically constrained exclusion process toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Exact identity suite, bad-box law and path invariants
    Verify,
    /// Simulate one trajectory from equilibrium
    Simulate,
    /// Squared time integrals of the bgp2, degree-three and rest terms over the n grid
    Bgp2,
    /// Field covariance against the Ornstein-Uhlenbeck prediction
    Covariance,
    /// Print the frames of an allowed exchange path
    PathDemo,
    /// Equilibrium law of the fluctuation field
    SampleEquilibrium,
}

/// Options overriding the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Plain-text `key = value` configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub m: Option<String>,
    /// Comma-separated constraint orders for verify
    #[arg(long, global = true)]
    pub m_list: Option<String>,
    /// Density as p/q or a decimal
    #[arg(long, global = true)]
    pub rho: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub b: Option<String>,
    #[arg(long, global = true)]
    pub gamma: Option<String>,
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Ring size
    #[arg(long = "L", global = true)]
    pub ring: Option<String>,
    #[arg(long, global = true)]
    pub ring_factor: Option<String>,
    #[arg(long, global = true)]
    pub t_max: Option<String>,
    #[arg(long, global = true)]
    pub sampling_dt: Option<String>,
    #[arg(long, global = true)]
    pub eps: Option<String>,
    #[arg(long, global = true)]
    pub ell: Option<String>,
    #[arg(long, global = true)]
    pub n_traj: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub threads: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Comma-separated grid of n
    #[arg(long, global = true)]
    pub ns: Option<String>,
    /// Comma-separated times
    #[arg(long, global = true)]
    pub times: Option<String>,
    #[arg(long, global = true)]
    pub rest_gammas: Option<String>,
    #[arg(long, global = true)]
    pub width: Option<String>,
    #[arg(long, global = true)]
    pub translates: Option<String>,
    /// Verify with corrupted rates (negative control)
    #[arg(long, global = true)]
    pub corrupted: bool,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub y: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub z: Option<String>,
    /// Occupation string such as 0110100
    #[arg(long, global = true)]
    pub configuration: Option<String>,
    #[arg(long, global = true)]
    pub box_len: Option<String>,
    #[arg(long, global = true)]
    pub samples: Option<String>,
    #[arg(long, global = true)]
    pub path_trials: Option<String>,
    /// Any option as key=value
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Options {
    /// Configuration file (or defaults), then flags, then `--set` pairs.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, &Option<String>); 26] = [
            ("m", &self.m),
            ("m_list", &self.m_list),
            ("rho", &self.rho),
            ("b", &self.b),
            ("gamma", &self.gamma),
            ("n", &self.n),
            ("L", &self.ring),
            ("ring_factor", &self.ring_factor),
            ("t_max", &self.t_max),
            ("sampling_dt", &self.sampling_dt),
            ("eps", &self.eps),
            ("ell", &self.ell),
            ("n_traj", &self.n_traj),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("out", &self.out),
            ("ns", &self.ns),
            ("times", &self.times),
            ("rest_gammas", &self.rest_gammas),
            ("width", &self.width),
            ("translates", &self.translates),
            ("y", &self.y),
            ("z", &self.z),
            ("configuration", &self.configuration),
            ("box_len", &self.box_len),
            ("samples", &self.samples),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if let Some(v) = &self.path_trials {
            cfg.set("path_trials", v)?;
        }
        if self.corrupted {
            cfg.corrupted = true;
        }
        for pair in &self.set {
            let (k, v) = pair.split_once('=').ok_or_else(|| CliError::Config(format!("--set {pair}: expected KEY=VALUE")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs `command`; returns the outcome text and whether all checks passed.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<commands::Outcome, CliError> {
    use commands::*;
    match command {
        Command::Verify => cmd_verify(cfg).map(|r| r.0),
        Command::Simulate => cmd_simulate(cfg),
        Command::Bgp2 => cmd_bgp2(cfg).map(|r| r.0),
        Command::Covariance => cmd_covariance(cfg).map(|r| r.0),
        Command::PathDemo => cmd_path_demo(cfg).map(|r| r.0),
        Command::SampleEquilibrium => cmd_sample_equilibrium(cfg).map(|r| r.0),
    }
}

/// Resolves the configuration, runs the command, prints the summary and
/// returns the exit status.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match cli.options.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    match execute(cli.command, &cfg) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
