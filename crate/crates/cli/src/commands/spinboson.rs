use serde_json::{json, Value};

use super::{check_positive, cutoff_shape, Outcome};
use crate::config::{GridScale, MethodArg, RunConfig, SpinbosonConfig};
use crate::output::{fmt_f64, Table};
use crate::CliError;
use dephaselab_core::quad::{self, geomspace, linspace, DEFAULT_TOLERANCE};
use dephaselab_core::specfun::{self, ExtReal, FormFactor, Method, SpecError, SpectralFunction};

fn time_grid(c: &SpinbosonConfig) -> Result<Vec<f64>, CliError> {
    if !(c.t_min >= 0.0 && c.t_max > c.t_min && c.t_max.is_finite()) {
        return Err(CliError::Usage(format!(
            "need 0 <= t-min < t-max, got {} and {}",
            c.t_min, c.t_max
        )));
    }
    if c.t_points < 2 {
        return Err(CliError::Usage("--t-points must be >= 2".into()));
    }
    Ok(match c.t_grid {
        GridScale::Lin => linspace(c.t_min, c.t_max, c.t_points),
        GridScale::Log if c.t_min > 0.0 => geomspace(c.t_min, c.t_max, c.t_points),
        GridScale::Log => {
            let mut g = vec![0.0];
            g.extend(geomspace(c.t_max * 1e-4, c.t_max, c.t_points - 1));
            g
        }
    })
}

fn ext(x: ExtReal) -> Value {
    match x {
        ExtReal::Finite(v) => json!(v),
        ExtReal::Divergent => json!("divergent"),
    }
}

fn resolve_method(ff: &FormFactor, m: MethodArg) -> Method {
    match m {
        MethodArg::ClosedForm => Method::ClosedForm,
        MethodArg::Quadrature => Method::Quadrature,
        MethodArg::Auto => {
            if specfun::decoherence_exponent_closed_form(ff, 1.0).is_ok() {
                Method::ClosedForm
            } else {
                Method::Quadrature
            }
        }
    }
}

/// `γ_t` by `method`; an unconverged quadrature returns its best estimate and `false`.
fn gamma_at(ff: &FormFactor, t: f64, method: Method, tol: f64) -> Result<(f64, bool), CliError> {
    let r = match method {
        Method::ClosedForm => specfun::decoherence_exponent_closed_form(ff, t),
        _ => specfun::decoherence_exponent(ff, t, tol),
    };
    match r {
        Ok(g) => Ok((g, true)),
        Err(SpecError::ToleranceNotMet { best, .. }) => Ok((best.max(0.0), false)),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn run(cfg: &RunConfig, c: &SpinbosonConfig) -> Result<Outcome, CliError> {
    check_positive("omega-c", c.omega_c)?;
    let tol = cfg.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let ff = FormFactor::new(c.kappa, c.lambda, c.omega_c, cutoff_shape(c.cutoff))?;
    let sf = SpectralFunction::new(ff, c.temperature)?;
    let method = resolve_method(&ff, c.method);
    let grid = time_grid(c)?;

    let mut table = Table::new(vec!["t", "gamma_t", "coherence", "method"]);
    let mut unconverged = 0usize;
    for &t in &grid {
        let (g, ok) = gamma_at(&ff, t, method, tol)?;
        if !ok {
            unconverged += 1;
        }
        let label = if ok {
            method.as_str().to_string()
        } else {
            format!("{}_unconverged", method.as_str())
        };
        table.push(vec![fmt_f64(t), fmt_f64(g), fmt_f64((-g).exp()), label]);
    }

    // γ_t/t over the final two decades, extrapolated to t → ∞.
    let tail = geomspace(c.t_max / 100.0, c.t_max, 8);
    let mut tail_ok = true;
    let mut slopes = Vec::with_capacity(tail.len());
    for &t in &tail {
        let (g, ok) = gamma_at(&ff, t, method, tol)?;
        tail_ok &= ok;
        slopes.push(g / t);
    }
    let extrapolated = match quad::limit_at_infinity(
        |t| {
            let i = tail.iter().position(|&x| x == t).expect("grid point");
            slopes[i]
        },
        &tail,
    ) {
        Ok(l) => {
            json!({ "estimate": l.estimate, "uncertainty": l.uncertainty, "converged": tail_ok })
        }
        Err(e) => json!({ "estimate": null, "error": e.to_string() }),
    };

    let sidecar = json!({
        "regime": specfun::classify(&ff),
        "norm_sq": ext(specfun::norm_sq(&ff)),
        "cloud_energy": ext(specfun::cloud_energy(&ff)),
        "asymptotic_rate": {
            "analytic": ext(specfun::asymptotic_rate(&ff)),
            "extrapolated": extrapolated,
        },
        "rate_from_spectral": ext(specfun::rate_from_spectral(&sf)),
        "overlaps": {
            "ground_state": specfun::ground_state_overlap(&ff),
            "initial_state": specfun::initial_state_overlap(&ff),
        },
        "method": method.as_str(),
        "tolerance": tol,
        "tolerance_met": unconverged == 0,
        "unconverged_points": unconverged,
    });
    let failure = (unconverged > 0).then(|| {
        CliError::ToleranceNotMet(format!(
            "{unconverged} grid points did not reach relative tolerance {tol}; rows are flagged in the method column"
        ))
    });
    Ok(Outcome {
        table,
        sidecar,
        failure,
    })
}
