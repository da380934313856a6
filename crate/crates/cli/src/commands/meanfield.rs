use serde_json::json;

use super::{check_positive, require_seed, Outcome};
use crate::config::{MeanfieldConfig, RunConfig};
use crate::output::{fmt_f64, Table};
use crate::CliError;
use dephaselab_core::meanfield::{self, MeanFieldConfig, MAX_LEVELS, MAX_SUBSYSTEMS};
use dephaselab_core::quad::geomspace;

pub(crate) fn run(cfg: &RunConfig, c: &MeanfieldConfig) -> Result<Outcome, CliError> {
    let seed = require_seed(cfg)?;
    check_positive("delta", c.delta)?;
    let mut ens: Vec<&str> = c.ensembles.iter().map(|s| s.trim()).collect();
    ens.sort_unstable();
    if ens != ["goe", "poisson"] {
        return Err(CliError::Usage(format!(
            "--ensembles must name poisson and goe, got {:?}",
            c.ensembles
        )));
    }
    if c.m > MAX_LEVELS || c.n > MAX_SUBSYSTEMS || c.n == 0 {
        return Err(CliError::DimensionCap(format!(
            "need 1 <= N <= {MAX_SUBSYSTEMS} and M <= {MAX_LEVELS}, got N = {} and M = {}",
            c.n, c.m
        )));
    }
    if !(c.t_min > 0.0 && c.t_max > c.t_min) || c.t_points < 2 {
        return Err(CliError::Usage(
            "need 0 < t-min < t-max and t-points >= 2".into(),
        ));
    }
    let mut grid = vec![0.0];
    grid.extend(geomspace(c.t_min, c.t_max, c.t_points));
    let mf = MeanFieldConfig {
        n: c.n,
        m: c.m,
        delta: c.delta,
        qbar2: c.qbar2,
        realizations: c.realizations,
        seed,
        t_grid: grid.clone(),
        identical_copies: c.identical_copies,
    };
    let cmp = meanfield::compare_ensembles(&mf)?;
    let mut table = Table::new(vec![
        "t",
        "abs_gamma_poisson",
        "stderr_p",
        "abs_gamma_goe",
        "stderr_g",
    ]);
    for (i, &t) in grid.iter().enumerate() {
        table.push(vec![
            fmt_f64(t),
            fmt_f64(cmp.poisson.mean_abs[i]),
            fmt_f64(cmp.poisson.stderr[i]),
            fmt_f64(cmp.goe.mean_abs[i]),
            fmt_f64(cmp.goe.stderr[i]),
        ]);
    }
    let sidecar = json!({
        "window": [cmp.window.0, cmp.window.1],
        "long_time": {
            "poisson": { "mean": cmp.poisson.long_time_mean, "stderr": cmp.poisson.long_time_stderr },
            "goe": { "mean": cmp.goe.long_time_mean, "stderr": cmp.goe.long_time_stderr },
        },
        "goe_exceeds_poisson_2sigma": cmp.goe_exceeds_poisson,
    });
    Ok(Outcome {
        table,
        sidecar,
        failure: None,
    })
}
