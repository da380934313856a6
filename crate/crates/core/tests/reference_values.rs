//! Decoherence exponents and spacing distributions checked against values
//! computed independently at 30 significant digits.

#![allow(clippy::excessive_precision)]

use dephaselab_core::rmt::SpacingLaw;
use dephaselab_core::specfun::{self, CutoffShape, FormFactor};

// (kappa, lambda, omega_c, cutoff, t, gamma_t)
const GAMMA: [(f64, f64, f64, CutoffShape, f64, f64); 24] = [
    (-1.0, 0.7, 1.3, CutoffShape::Hard, 0.5, 0.44970494957710866),
    (-1.0, 0.7, 1.3, CutoffShape::Hard, 3.0, 11.205218772561263),
    (-1.0, 0.7, 1.3, CutoffShape::Hard, 40.0, 173.73430771671679),
    (-0.5, 0.7, 1.3, CutoffShape::Hard, 0.5, 0.3406810469569913),
    (-0.5, 0.7, 1.3, CutoffShape::Hard, 3.0, 7.4876395939614198),
    (-0.5, 0.7, 1.3, CutoffShape::Hard, 40.0, 39.430989070270111),
    (0.0, 0.7, 1.3, CutoffShape::Hard, 0.5, 0.2905921747572539),
    (0.0, 0.7, 1.3, CutoffShape::Hard, 3.0, 5.7727363882858563),
    (0.0, 0.7, 1.3, CutoffShape::Hard, 40.0, 12.626430888950481),
    (0.5, 0.7, 1.3, CutoffShape::Hard, 0.5, 0.26453999410168971),
    (0.5, 0.7, 1.3, CutoffShape::Hard, 3.0, 4.8368421458440394),
    (0.5, 0.7, 1.3, CutoffShape::Hard, 40.0, 5.7694641457881168),
    (1.0, 0.7, 1.3, CutoffShape::Hard, 0.5, 0.25095612787817847),
    (1.0, 0.7, 1.3, CutoffShape::Hard, 3.0, 4.2819150819050422),
    (1.0, 0.7, 1.3, CutoffShape::Hard, 40.0, 3.5709360685571659),
    (2.0, 0.7, 1.3, CutoffShape::Hard, 0.5, 0.24410442249220673),
    (2.0, 0.7, 1.3, CutoffShape::Hard, 3.0, 3.7374463233388208),
    (2.0, 0.7, 1.3, CutoffShape::Hard, 40.0, 2.2782521229907084),
    (
        -0.5,
        0.4,
        2.0,
        CutoffShape::Exponential,
        0.3,
        0.16330620178868949,
    ),
    (
        -0.5,
        0.4,
        2.0,
        CutoffShape::Exponential,
        7.0,
        6.9859407542797269,
    ),
    (
        0.0,
        0.4,
        2.0,
        CutoffShape::Exponential,
        0.3,
        0.24598775979836851,
    ),
    (
        0.0,
        0.4,
        2.0,
        CutoffShape::Exponential,
        7.0,
        4.226562982990391,
    ),
    (
        1.5,
        0.4,
        2.0,
        CutoffShape::Exponential,
        0.3,
        1.8162761029698381,
    ),
    (
        1.5,
        0.4,
        2.0,
        CutoffShape::Exponential,
        7.0,
        4.0584712448384125,
    ),
];

#[test]
fn quadrature_matches_reference_exponents() {
    for (kappa, lambda, wc, cutoff, t, want) in GAMMA {
        let ff = FormFactor::new(kappa, lambda, wc, cutoff).unwrap();
        let got = specfun::decoherence_exponent(&ff, t, 1e-11).unwrap();
        assert!(
            (got / want - 1.0).abs() < 1e-8,
            "kappa={kappa} {cutoff:?} t={t}: {got} vs {want}"
        );
    }
}

#[test]
fn closed_forms_match_reference_exponents() {
    let mut checked = 0;
    for (kappa, lambda, wc, cutoff, t, want) in GAMMA {
        let ff = FormFactor::new(kappa, lambda, wc, cutoff).unwrap();
        if let Ok(got) = specfun::decoherence_exponent_closed_form(&ff, t) {
            assert!(
                (got / want - 1.0).abs() < 1e-12,
                "kappa={kappa} t={t}: {got} vs {want}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 9);
}

#[test]
fn surmise_cdf_at_mean_spacing() {
    let want = [
        (1, 0.54406187223400376),
        (2, 0.5330502005906137),
        (4, 0.52373076890550194),
    ];
    for (beta, w) in want {
        let got = SpacingLaw::surmise(beta).unwrap().cdf(1.0);
        assert!((got - w).abs() < 1e-13, "beta={beta}: {got}");
    }
    assert!((SpacingLaw::Poisson.cdf(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
}

#[test]
fn ohmic_rates_in_closed_form() {
    use dephaselab_core::specfun::{ExtReal, SpectralFunction};
    use std::f64::consts::PI;
    let ff = FormFactor::hard(0.0, 0.25, 1.0).unwrap();
    let sf = SpectralFunction::new(ff, 0.8).unwrap();
    assert_eq!(
        specfun::rate_from_spectral(&sf),
        ExtReal::Finite(PI * 0.25 * 0.8)
    );
    let sub = FormFactor::hard(-1.0, 0.25, 1.0).unwrap();
    assert_eq!(
        specfun::asymptotic_rate(&sub),
        ExtReal::Finite(2.0 * PI * 0.25)
    );
    assert_eq!(
        specfun::rate_from_spectral(&SpectralFunction::new(sub, 0.0).unwrap()),
        ExtReal::Finite(PI * 0.25)
    );
}
