//! Analytic layer of the spin-boson dephasing model.
//!
//! The coupling enters only through the form factor `|g(ω)|² = λ ω^(κ-1)`,
//! cut off at `ω_c`. Norms, cloud energies and vacuum/thermal spectral
//! functions have closed forms; the decoherence exponent
//! `γ_t = 2‖g - g_t‖² = 4 ∫ |g(ω)|² (1 - cos ωt) dω` is evaluated by
//! [`crate::quad`], with closed forms for `κ ∈ {-1, 0, 1}` under a hard cutoff.
//!
//! Infrared divergences are data, not errors: quantities that diverge come
//! back as [`ExtReal::Divergent`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, IntegrandSpec, QuadError, QuadResult};
use crate::special::{cin, si};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("invalid form factor: {0}")]
    InvalidFormFactor(String),
    #[error("decoherence integrand not integrable at ω = 0 for κ = {kappa} (need κ > -2)")]
    NonIntegrable { kappa: f64 },
    #[error("quadrature could not certify relative tolerance {tol}: best {best} ± {error}")]
    ToleranceNotMet { best: f64, error: f64, tol: f64 },
    #[error("argument outside the domain: {0}")]
    DomainError(String),
    #[error("no closed form for κ = {kappa} with {cutoff:?} cutoff")]
    NoClosedForm { kappa: f64, cutoff: CutoffShape },
    #[error("method {0:?} is not produced by the analytic layer")]
    UnsupportedMethod(Method),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// How the coupling is switched off at high frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CutoffShape {
    /// `g(ω) = 0` for `ω > ω_c`.
    #[default]
    Hard,
    /// `|g(ω)|²` multiplied by `e^(-ω/ω_c)`.
    Exponential,
}

/// Power-law coupling profile `|g(ω)|² = λ ω^(κ-1)` with a cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormFactor {
    pub kappa: f64,
    pub lambda: f64,
    pub omega_c: f64,
    pub cutoff: CutoffShape,
}

impl FormFactor {
    pub fn new(
        kappa: f64,
        lambda: f64,
        omega_c: f64,
        cutoff: CutoffShape,
    ) -> Result<Self, SpecError> {
        if !kappa.is_finite() {
            return Err(SpecError::InvalidFormFactor(format!("kappa = {kappa}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SpecError::InvalidFormFactor(format!(
                "lambda = {lambda} must be >= 0"
            )));
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(SpecError::InvalidFormFactor(format!(
                "omega_c = {omega_c} must be > 0"
            )));
        }
        Ok(Self {
            kappa,
            lambda,
            omega_c,
            cutoff,
        })
    }

    /// Hard-cutoff form factor.
    pub fn hard(kappa: f64, lambda: f64, omega_c: f64) -> Result<Self, SpecError> {
        Self::new(kappa, lambda, omega_c, CutoffShape::Hard)
    }

    /// Same profile with the amplitude multiplied by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, SpecError> {
        Self::new(self.kappa, self.lambda * c, self.omega_c, self.cutoff)
    }

    fn cutoff_factor(&self, omega: f64) -> f64 {
        match self.cutoff {
            CutoffShape::Hard => {
                if omega > self.omega_c {
                    0.0
                } else {
                    1.0
                }
            }
            CutoffShape::Exponential => (-omega / self.omega_c).exp(),
        }
    }

    /// `|g(ω)|²`; `+∞` at `ω = 0` when `κ < 1`.
    pub fn coupling_sq(&self, omega: f64) -> f64 {
        if omega < 0.0 || self.lambda == 0.0 {
            return 0.0;
        }
        let c = self.cutoff_factor(omega);
        if c == 0.0 {
            return 0.0;
        }
        self.lambda * omega.powf(self.kappa - 1.0) * c
    }

    /// Upper integration limit beyond which the coupling is negligible.
    pub fn support_end(&self) -> f64 {
        match self.cutoff {
            CutoffShape::Hard => self.omega_c,
            CutoffShape::Exponential => self.omega_c * (60.0 + 4.0 * self.kappa.max(0.0)),
        }
    }
}

/// Existence classes of the ground states of the displaced-oscillator Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `κ > 0`: `‖g‖ < ∞`, ground states exist in Fock space.
    Regular,
    /// `-1 < κ <= 0`: bounded below, but no Fock-space ground state.
    InfraredSingular,
    /// `κ <= -1`: unbounded below or not self-adjoint.
    Unphysical,
}

/// Classification by `κ` alone.
pub fn classify_kappa(kappa: f64) -> Regime {
    if kappa > 0.0 {
        Regime::Regular
    } else if kappa > -1.0 {
        Regime::InfraredSingular
    } else {
        Regime::Unphysical
    }
}

pub fn classify(ff: &FormFactor) -> Regime {
    classify_kappa(ff.kappa)
}

/// A nonnegative real number or a divergence flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtReal {
    Finite(f64),
    Divergent,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Divergent => None,
        }
    }

    /// `f64` view with `Divergent ↦ +∞`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Divergent => f.write_str("divergent"),
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::Divergent,
        }
    }
}

/// Scaling by `c >= 0`. A divergent value scaled by exactly zero is taken as
/// zero (the zero-coupling limit).
impl Mul<f64> for ExtReal {
    type Output = ExtReal;
    fn mul(self, c: f64) -> ExtReal {
        debug_assert!(c >= 0.0);
        match self {
            ExtReal::Finite(a) => ExtReal::Finite(a * c),
            ExtReal::Divergent if c == 0.0 => ExtReal::Finite(0.0),
            ExtReal::Divergent => ExtReal::Divergent,
        }
    }
}

/// `‖g‖² = ∫₀^∞ |g(ω)|² dω`.
pub fn norm_sq(ff: &FormFactor) -> ExtReal {
    if ff.lambda == 0.0 {
        return ExtReal::Finite(0.0);
    }
    if ff.kappa <= 0.0 {
        return ExtReal::Divergent;
    }
    let k = ff.kappa;
    ExtReal::Finite(match ff.cutoff {
        CutoffShape::Hard => ff.lambda * ff.omega_c.powf(k) / k,
        CutoffShape::Exponential => ff.lambda * libm::tgamma(k) * ff.omega_c.powf(k),
    })
}

/// Quadrature evaluation of `‖g‖²`, the independent route to [`norm_sq`].
pub fn norm_sq_quadrature(ff: &FormFactor, tol: f64) -> Result<QuadResult, SpecError> {
    let spec = IntegrandSpec::new(|w: f64| ff.coupling_sq(w), 0.0, ff.support_end())
        .endpoint_exponent(ff.kappa - 1.0);
    Ok(quad::integrate(&spec, tol)?)
}

/// Cloud energy `E_g = ∫₀^∞ ω |g(ω)|² dω`; the ground energy is `-E_g`.
pub fn cloud_energy(ff: &FormFactor) -> ExtReal {
    if ff.lambda == 0.0 {
        return ExtReal::Finite(0.0);
    }
    if ff.kappa <= -1.0 {
        return ExtReal::Divergent;
    }
    let k1 = ff.kappa + 1.0;
    ExtReal::Finite(match ff.cutoff {
        CutoffShape::Hard => ff.lambda * ff.omega_c.powf(k1) / k1,
        CutoffShape::Exponential => ff.lambda * libm::tgamma(k1) * ff.omega_c.powf(k1),
    })
}

/// Quadrature evaluation of `E_g`.
pub fn cloud_energy_quadrature(ff: &FormFactor, tol: f64) -> Result<QuadResult, SpecError> {
    let spec = IntegrandSpec::new(|w: f64| w * ff.coupling_sq(w), 0.0, ff.support_end())
        .endpoint_exponent(ff.kappa);
    Ok(quad::integrate(&spec, tol)?)
}

/// `γ_t = 4 ∫₀^∞ |g(ω)|² (1 - cos ωt) dω` by certified quadrature.
pub fn decoherence_exponent(ff: &FormFactor, t: f64, tol: f64) -> Result<f64, SpecError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(SpecError::DomainError(format!(
            "t = {t} must be finite and >= 0"
        )));
    }
    if ff.kappa <= -2.0 {
        return Err(SpecError::NonIntegrable { kappa: ff.kappa });
    }
    if t == 0.0 || ff.lambda == 0.0 {
        return Ok(0.0);
    }
    // 1 - cos x = 2 sin²(x/2), free of cancellation at small ωt.
    let integrand = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let s = (0.5 * w * t).sin();
        8.0 * ff.coupling_sq(w) * s * s
    };
    let spec = IntegrandSpec::new(integrand, 0.0, ff.support_end())
        .endpoint_exponent(ff.kappa + 1.0)
        .oscillation_frequency(t);
    let r = quad::integrate(&spec, tol)?;
    if !r.converged {
        return Err(SpecError::ToleranceNotMet {
            best: r.value,
            error: r.error_estimate,
            tol,
        });
    }
    Ok(r.value.max(0.0))
}

/// Closed form of `γ_t` for a hard cutoff and `κ ∈ {-1, 0, 1}`.
///
/// * `κ = 1`: `4λ(ω_c - sin(ω_c t)/t)`
/// * `κ = 0`: `4λ Cin(ω_c t)`
/// * `κ = -1`: `4λ(t Si(ω_c t) - (1 - cos ω_c t)/ω_c)`
pub fn decoherence_exponent_closed_form(ff: &FormFactor, t: f64) -> Result<f64, SpecError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(SpecError::DomainError(format!(
            "t = {t} must be finite and >= 0"
        )));
    }
    let no_closed_form = SpecError::NoClosedForm {
        kappa: ff.kappa,
        cutoff: ff.cutoff,
    };
    if ff.cutoff != CutoffShape::Hard {
        return Err(no_closed_form);
    }
    if t == 0.0 || ff.lambda == 0.0 {
        return Ok(0.0);
    }
    let (l, wc) = (ff.lambda, ff.omega_c);
    let x = wc * t;
    let value = if ff.kappa == 1.0 {
        // ω_c - sin(x)/t = (x - sin x)/t
        let x_minus_sin = if x < 1e-2 {
            x.powi(3) / 6.0 - x.powi(5) / 120.0 + x.powi(7) / 5040.0
        } else {
            x - x.sin()
        };
        4.0 * l * x_minus_sin / t
    } else if ff.kappa == 0.0 {
        4.0 * l * cin(x)
    } else if ff.kappa == -1.0 {
        let s = (0.5 * x).sin();
        4.0 * l * (t * si(x) - 2.0 * s * s / wc)
    } else {
        return Err(no_closed_form);
    };
    Ok(value.max(0.0))
}

/// Provenance of a decoherence curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    FockOracle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::FockOracle => "fock_oracle",
        }
    }
}

/// Sampled `γ_t` and `e^(-γ_t)` on an ascending time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceCurve {
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
    pub coherence: Vec<f64>,
    pub method: Method,
    pub tolerance: f64,
}

impl DecoherenceCurve {
    pub fn from_gamma(
        times: Vec<f64>,
        gamma: Vec<f64>,
        method: Method,
        tolerance: f64,
    ) -> Result<Self, SpecError> {
        if times.len() != gamma.len() {
            return Err(SpecError::DomainError(
                "times and gamma lengths differ".into(),
            ));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) || times.first().is_some_and(|&t| t < 0.0) {
            return Err(SpecError::DomainError(
                "time grid must be ascending and >= 0".into(),
            ));
        }
        if gamma.iter().any(|&g| !(g >= 0.0)) {
            return Err(SpecError::DomainError("gamma values must be >= 0".into()));
        }
        let coherence = gamma.iter().map(|g| (-g).exp()).collect();
        Ok(Self {
            times,
            gamma,
            coherence,
            method,
            tolerance,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `γ_t` over a time grid by the chosen method.
pub fn decoherence_curve(
    ff: &FormFactor,
    times: &[f64],
    method: Method,
    tol: f64,
) -> Result<DecoherenceCurve, SpecError> {
    let gamma = times
        .iter()
        .map(|&t| match method {
            Method::ClosedForm => decoherence_exponent_closed_form(ff, t),
            Method::Quadrature => decoherence_exponent(ff, t, tol),
            Method::FockOracle => Err(SpecError::UnsupportedMethod(method)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    DecoherenceCurve::from_gamma(times.to_vec(), gamma, method, tol)
}

/// `lim_{t→∞} γ_t / t = 2π lim_{ω→0} ω² |g(ω)|²`.
pub fn asymptotic_rate(ff: &FormFactor) -> ExtReal {
    if ff.lambda == 0.0 || ff.kappa > -1.0 {
        ExtReal::Finite(0.0)
    } else if ff.kappa == -1.0 {
        ExtReal::Finite(2.0 * PI * ff.lambda)
    } else {
        ExtReal::Divergent
    }
}

/// Zero-temperature spectral density `R̂₀(ω) = 2π ω² |g(ω)|²` (zero for `ω < 0`).
pub fn spectral_density_vacuum(ff: &FormFactor, omega: f64) -> f64 {
    if omega < 0.0 || ff.lambda == 0.0 {
        return 0.0;
    }
    if omega == 0.0 {
        return asymptotic_rate(ff).to_f64();
    }
    2.0 * PI * ff.lambda * omega.powf(ff.kappa + 1.0) * ff.cutoff_factor(omega)
}

/// Bath spectral function at temperature `T >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunction {
    pub form_factor: FormFactor,
    pub temperature: f64,
}

impl SpectralFunction {
    pub fn new(form_factor: FormFactor, temperature: f64) -> Result<Self, SpecError> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(SpecError::DomainError(format!(
                "temperature {temperature} must be >= 0"
            )));
        }
        Ok(Self {
            form_factor,
            temperature,
        })
    }
}

/// `R̂_T(ω) = R̂₀(ω) / (1 - e^(-ω/T))` for `ω > 0`.
pub fn spectral_density_thermal(sf: &SpectralFunction, omega: f64) -> Result<f64, SpecError> {
    if !(omega > 0.0) {
        return Err(SpecError::DomainError(format!(
            "thermal spectral density needs ω > 0, got {omega}; use rate_from_spectral for ω → 0"
        )));
    }
    let r0 = spectral_density_vacuum(&sf.form_factor, omega);
    if sf.temperature == 0.0 {
        return Ok(r0);
    }
    let bose = -(-omega / sf.temperature).exp_m1();
    Ok(r0 / bose)
}

/// Markovian dephasing rate `½ lim_{ω→0⁺} R̂_T(ω)`.
///
/// At `T = 0` this is `π lim ω²|g|²`, half of [`asymptotic_rate`]; the exact
/// large-`t` slope of `γ_t` is the latter.
pub fn rate_from_spectral(sf: &SpectralFunction) -> ExtReal {
    let ff = &sf.form_factor;
    if ff.lambda == 0.0 {
        return ExtReal::Finite(0.0);
    }
    let t = sf.temperature;
    if t == 0.0 {
        // ½ · 2πλ ω^(κ+1)
        return if ff.kappa > -1.0 {
            ExtReal::Finite(0.0)
        } else if ff.kappa == -1.0 {
            ExtReal::Finite(PI * ff.lambda)
        } else {
            ExtReal::Divergent
        };
    }
    // ½ · (T/ω) · 2πλ ω^(κ+1) = πλT ω^κ
    if ff.kappa > 0.0 {
        ExtReal::Finite(0.0)
    } else if ff.kappa == 0.0 {
        ExtReal::Finite(PI * ff.lambda * t)
    } else {
        ExtReal::Divergent
    }
}

/// `|⟨Φ₊(g), Φ₋(g)⟩| = e^(-2‖g‖²)`; zero for an infrared-divergent norm.
pub fn ground_state_overlap(ff: &FormFactor) -> f64 {
    match norm_sq(ff) {
        ExtReal::Finite(n) => (-2.0 * n).exp(),
        ExtReal::Divergent => 0.0,
    }
}

/// `|⟨Ψ_in, Φ_±(g)⟩|² = e^(-‖g‖²)` for the bare product initial state.
pub fn initial_state_overlap(ff: &FormFactor) -> f64 {
    match norm_sq(ff) {
        ExtReal::Finite(n) => (-n).exp(),
        ExtReal::Divergent => 0.0,
    }
}
