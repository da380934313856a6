//! Special functions not provided by `libm`: sine/cosine integrals and
//! Gauss-Legendre nodes.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_SWITCH: f64 = 4.0;

fn si_ci_series(x: f64) -> (f64, f64) {
    // Si = sum (-1)^k x^(2k+1) / ((2k+1)(2k+1)!), Cin = sum (-1)^(k+1) x^(2k) / (2k (2k)!)
    let mut si = 0.0;
    let mut cin = 0.0;
    // term = x^n / n!
    let mut term = x;
    let mut n = 1u32;
    loop {
        let sign = if (n / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        si += sign * term / n as f64;
        let next = term * x / (n + 1) as f64;
        let cs = if n.div_ceil(2) % 2 == 1 { 1.0 } else { -1.0 };
        cin += cs * next / (n + 1) as f64;
        term = next * x / (n + 2) as f64;
        n += 2;
        if term < 1e-3 * f64::EPSILON * cin.abs().min(si.abs()) || n > 200 {
            break;
        }
    }
    (si, cin)
}

/// Continued fraction for E1(ix), valid for x >= 2.
fn si_ci_continued_fraction(x: f64) -> (f64, f64) {
    const TINY: f64 = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 2..10_000u32 {
        let a = -((i - 1) as f64).powi(2);
        b += 2.0;
        d = (d * a + b).inv();
        c = b + c.inv() * a;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h *= Complex64::new(x.cos(), -x.sin());
    let ci = -h.re;
    let si = FRAC_PI_2 + h.im;
    (si, ci)
}

/// Sine integral `Si(x) = ∫₀ˣ sin(u)/u du`.
pub fn si(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax == 0.0 {
        0.0
    } else if ax <= SERIES_SWITCH {
        si_ci_series(ax).0
    } else {
        si_ci_continued_fraction(ax).0
    };
    v.copysign(x)
}

/// Cosine integral `Ci(x) = γ + ln x + ∫₀ˣ (cos u - 1)/u du`, for `x > 0`.
pub fn ci(x: f64) -> f64 {
    assert!(x > 0.0, "Ci is defined for x > 0");
    if x <= SERIES_SWITCH {
        EULER_GAMMA + x.ln() - si_ci_series(x).1
    } else {
        si_ci_continued_fraction(x).1
    }
}

/// Entire cosine integral `Cin(x) = ∫₀ˣ (1 - cos u)/u du`.
pub fn cin(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= SERIES_SWITCH {
        si_ci_series(ax).1
    } else {
        EULER_GAMMA + ax.ln() - si_ci_continued_fraction(ax).1
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 30-digit arbitrary precision.
    #[test]
    fn sine_and_cosine_integrals_match_reference() {
        let cases = [
            (1.0, 0.946_083_070_367_183, 0.337_403_922_900_968_1),
            (10.0, 1.658_347_594_218_874, -0.045_456_433_004_455_37),
            (100.0, 1.562_225_466_889_056_3, -0.005_148_825_142_610_492),
        ];
        for (x, s, c) in cases {
            assert!((si(x) - s).abs() < 1e-14, "Si({x}) = {}", si(x));
            assert!((ci(x) - c).abs() < 1e-14, "Ci({x}) = {}", ci(x));
        }
        assert_eq!(si(0.0), 0.0);
        assert!((si(-1.0) + 0.946_083_070_367_183).abs() < 1e-14);
    }

    #[test]
    fn series_and_continued_fraction_agree_at_switch() {
        for x in [2.5, 3.0, 3.9, 4.0] {
            let (s1, cin1) = si_ci_series(x);
            let (s2, c2) = si_ci_continued_fraction(x);
            assert!((s1 - s2).abs() < 1e-13);
            assert!((EULER_GAMMA + x.ln() - cin1 - c2).abs() < 1e-13);
        }
    }

    #[test]
    fn cin_small_argument() {
        // Cin(x) ≈ x²/4 - x⁴/96
        let x = 1e-3;
        assert!((cin(x) - (x * x / 4.0 - x.powi(4) / 96.0)).abs() < 1e-20);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let sum: f64 = w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m12 - 2.0 / 13.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }
}
