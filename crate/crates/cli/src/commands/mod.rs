mod meanfield;
mod oracle;
mod rmt;
mod spinboson;

use serde_json::{json, Value};

use crate::config::{CommandConfig, CutoffArg, RunConfig};
use crate::output::{self, Table};
use crate::CliError;
use dephaselab_core::specfun::CutoffShape;
use dephaselab_core::VERSION;

/// Result of a command: the data to write, plus a failure to report after
/// writing (e.g. a partially converged grid).
pub(crate) struct Outcome {
    pub table: Table,
    pub sidecar: Value,
    pub failure: Option<CliError>,
}

pub(crate) fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    let outcome = match &cfg.command {
        CommandConfig::Spinboson(c) => spinboson::run(cfg, c)?,
        CommandConfig::OracleCheck(c) => oracle::run(cfg, c)?,
        CommandConfig::Rmt(c) => rmt::run(cfg, c)?,
        CommandConfig::Meanfield(c) => meanfield::run(cfg, c)?,
    };
    let mut sidecar = json!({
        "version": VERSION,
        "config": cfg.canonical(),
    });
    if let (Value::Object(base), Value::Object(extra)) = (&mut sidecar, outcome.sidecar) {
        base.extend(extra);
    }
    output::emit(&outcome.table, &sidecar, cfg.output.as_deref())?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub(crate) fn require_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    cfg.seed.ok_or_else(|| {
        CliError::Usage("this command is stochastic and needs an explicit --seed".into())
    })
}

pub(crate) fn cutoff_shape(c: CutoffArg) -> CutoffShape {
    match c {
        CutoffArg::Hard => CutoffShape::Hard,
        CutoffArg::Exp => CutoffShape::Exponential,
    }
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--{name} must be finite and > 0, got {x}"
        )))
    }
}
