use serde_json::json;

use super::{check_positive, require_seed, Outcome};
use crate::config::{PairsArg, RmtConfig, RmtMode, RunConfig};
use crate::output::{fmt_f64, Table};
use crate::CliError;
use dephaselab_core::quad::linspace;
use dephaselab_core::rmt::{
    self, EnsembleKind, LevelEnsemble, PairSelection, RmtError, SpectralRun, DEFAULT_BANDWIDTH,
};
use rayon::prelude::*;

pub(crate) fn run(cfg: &RunConfig, c: &RmtConfig) -> Result<Outcome, CliError> {
    let seed = require_seed(cfg)?;
    let a = &c.args;
    check_positive("delta", a.delta)?;
    let kind: EnsembleKind = a.ensemble.parse()?;
    let ensemble = LevelEnsemble::new(kind, a.m, a.delta)?;
    match c.mode {
        RmtMode::Spacings => spacings(c, &ensemble, seed),
        RmtMode::Spectral | RmtMode::Rate => spectral(c, &ensemble, seed),
    }
}

fn spacings(c: &RmtConfig, ensemble: &LevelEnsemble, seed: u64) -> Result<Outcome, CliError> {
    let a = &c.args;
    if a.realizations == 0 {
        return Err(RmtError::InsufficientSamples { needed: 1, got: 0 }.into());
    }
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be >= 1".into()));
    }
    check_positive("s-max", a.s_max)?;
    let sets = (0..a.realizations as u64)
        .into_par_iter()
        .map(|r| rmt::sample_levels(ensemble, seed, r))
        .collect::<Result<Vec<_>, _>>()?;
    let spacings: Vec<f64> = sets
        .iter()
        .flat_map(|l| l.spacings())
        .map(|s| s / a.delta)
        .collect();
    let law = ensemble.kind.spacing_law();
    let ks = rmt::ks_statistic(&spacings, |s| law.cdf(s));
    let mut table = Table::new(vec!["s", "empirical_pdf", "theory_pdf"]);
    for (s, d) in rmt::spacing_histogram(&spacings, a.bins, a.s_max) {
        table.push(vec![fmt_f64(s), fmt_f64(d), fmt_f64(law.pdf(s))]);
    }
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let sidecar = json!({
        "ks_statistic": ks,
        "spacings": spacings.len(),
        "mean_spacing": mean,
        "law": law,
    });
    Ok(Outcome {
        table,
        sidecar,
        failure: None,
    })
}

fn spectral(c: &RmtConfig, ensemble: &LevelEnsemble, seed: u64) -> Result<Outcome, CliError> {
    let a = &c.args;
    let bandwidth = a.bandwidth.unwrap_or(DEFAULT_BANDWIDTH * a.delta);
    check_positive("bandwidth", bandwidth)?;
    let omega_max = a.omega_max.unwrap_or(2.0 * a.delta);
    check_positive("omega-max", omega_max)?;
    if a.omega_points < 2 {
        return Err(CliError::Usage("--omega-points must be >= 2".into()));
    }
    if !(a.qbar2 >= 0.0 && a.qbar2.is_finite()) {
        return Err(CliError::Usage("--qbar2 must be finite and >= 0".into()));
    }
    let grid = linspace(0.0, omega_max, a.omega_points);
    let run = SpectralRun {
        ensemble: *ensemble,
        qbar2: a.qbar2,
        realizations: a.realizations,
        seed,
        bandwidth,
        pairs: match a.pairs {
            PairsArg::All => PairSelection::All,
            PairsArg::Nearest => PairSelection::NearestNeighbour,
        },
    };
    let est = rmt::sample_spectral_estimate(&run, &grid)?;
    let law = ensemble.kind.spacing_law();
    let mut table = Table::new(vec!["omega", "r_hat", "stderr", "surmise"]);
    let rate = match c.mode {
        RmtMode::Rate => Some(rmt::rate_estimate(&est)?),
        _ => None,
    };
    for (i, &w) in grid.iter().enumerate() {
        if let Some(r) = &rate {
            // The rate table shows the fitted window only.
            if w < r.window.0 * (1.0 - 1e-9) || w > r.window.1 * (1.0 + 1e-9) {
                continue;
            }
        }
        table.push(vec![
            fmt_f64(w),
            fmt_f64(est.r_hat[i]),
            fmt_f64(est.stderr[i]),
            fmt_f64(rmt::surmise_prediction(law, a.qbar2, w, a.delta)),
        ]);
    }
    let sidecar = match rate {
        Some(r) => json!({
            "gamma": r.gamma,
            "stderr": r.stderr,
            "intercept": r.intercept,
            "negative_intercept": r.negative_intercept,
            "window": [r.window.0, r.window.1],
            "window_points": r.points,
            "bandwidth": bandwidth,
            "samples": est.samples,
        }),
        None => json!({
            "bandwidth": bandwidth,
            "samples": est.samples,
            "law": law,
        }),
    };
    Ok(Outcome {
        table,
        sidecar,
        failure: None,
    })
}
