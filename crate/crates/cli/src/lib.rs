//! Command-line front end: flags or a JSON config in, CSV series and a JSON
//! sidecar out.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 tolerance not
//! met, 4 truncation leakage, 5 insufficient samples, 6 dimension cap.

pub mod config;
pub mod output;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dephaselab_core::fock::FockError;
use dephaselab_core::meanfield::MeanFieldError;
use dephaselab_core::rmt::RmtError;
use dephaselab_core::specfun::SpecError;
use thiserror::Error;

use config::{
    CommandConfig, MeanfieldConfig, OracleConfig, RmtArgs, RmtConfig, RmtMode, RunConfig,
    SpinbosonConfig,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    ToleranceNotMet(String),
    #[error("{0}")]
    TruncationLeak(String),
    #[error("{0}")]
    InsufficientSamples(String),
    #[error("{0}")]
    DimensionCap(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::ToleranceNotMet(_) => 3,
            CliError::TruncationLeak(_) => 4,
            CliError::InsufficientSamples(_) => 5,
            CliError::DimensionCap(_) => 6,
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::ToleranceNotMet { .. } => CliError::ToleranceNotMet(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<FockError> for CliError {
    fn from(e: FockError) -> Self {
        match e {
            FockError::TruncationLeak { .. } => CliError::TruncationLeak(format!(
                "truncation leakage exceeds the limit ({e}); hint: raise --n-max"
            )),
            FockError::DimensionCap { .. } => CliError::DimensionCap(e.to_string()),
            FockError::Spec(s) => s.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<RmtError> for CliError {
    fn from(e: RmtError) -> Self {
        match e {
            RmtError::InsufficientSamples { .. } => CliError::InsufficientSamples(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<MeanFieldError> for CliError {
    fn from(e: MeanFieldError) -> Self {
        match e {
            MeanFieldError::DimensionCap(_) => CliError::DimensionCap(e.to_string()),
            MeanFieldError::Rmt(r) => r.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dephaselab",
    version,
    about = "Exactly solvable pure-dephasing models"
)]
struct Cli {
    /// Master seed; required by stochastic commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// CSV destination; the JSON sidecar goes next to it. CSV goes to stdout if omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Relative tolerance for certified quadrature.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = "DEPHASELAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decoherence exponent of the spin-boson model over a time grid.
    Spinboson(SpinbosonConfig),
    /// Truncated Fock-space propagation checked against the closed form.
    OracleCheck(OracleConfig),
    /// Random-level spacing statistics and spectral-function estimates.
    Rmt {
        #[command(subcommand)]
        mode: RmtCommand,
    },
    /// Finite-N mean-field dephasing, Poisson versus GOE subsystem spectra.
    Meanfield(MeanfieldConfig),
    /// Re-run a config file or the sidecar of an earlier run.
    Run {
        /// JSON file holding a run config.
        config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum RmtCommand {
    Spacings(RmtArgs),
    Spectral(RmtArgs),
    Rate(RmtArgs),
}

/// `Ok(None)` when clap already handled the request (help, version).
fn parse(args: Vec<OsString>) -> Result<Option<RunConfig>, CliError> {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 {
                Ok(None)
            } else {
                Err(CliError::Usage(String::new()))
            };
        }
    };
    let command = match cli.command {
        Command::Spinboson(c) => CommandConfig::Spinboson(c),
        Command::OracleCheck(c) => CommandConfig::OracleCheck(c),
        Command::Rmt { mode } => {
            let (mode, args) = match mode {
                RmtCommand::Spacings(a) => (RmtMode::Spacings, a),
                RmtCommand::Spectral(a) => (RmtMode::Spectral, a),
                RmtCommand::Rate(a) => (RmtMode::Rate, a),
            };
            CommandConfig::Rmt(RmtConfig { mode, args })
        }
        Command::Meanfield(c) => CommandConfig::Meanfield(c),
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
            let mut cfg = RunConfig::from_json(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", config.display())))?;
            // Command-line globals take precedence over the file.
            cfg.seed = cli.seed.or(cfg.seed);
            cfg.output = cli.output.or(cfg.output);
            cfg.tolerance = cli.tolerance.or(cfg.tolerance);
            cfg.threads = cli.threads.or(cfg.threads);
            return Ok(Some(cfg));
        }
    };
    Ok(Some(RunConfig {
        seed: cli.seed,
        output: cli.output,
        tolerance: cli.tolerance,
        threads: cli.threads,
        command,
    }))
}

/// Executes a parsed config on a pool of `cfg.threads` workers.
pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cfg))
}

/// Entry point shared by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let result = parse(args).and_then(|cfg| cfg.map_or(Ok(()), |c| execute(&c)));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            e.exit_code()
        }
    }
}
