//! Certified one-dimensional quadrature for endpoint-singular and oscillatory
//! integrands.
//!
//! The workhorse is a globally adaptive 21-point Gauss-Kronrod scheme with
//! QUADPACK-style error rescaling. Two refinements sit on top of it:
//!
//! * a declared endpoint behaviour `f(x) ~ (x-a)^p` triggers the substitution
//!   `x = a + L u^m` with `m = 2/(p+1)` on the first panel, which turns the
//!   leading singular term into a linear one;
//! * a declared oscillation frequency `t` pre-splits `[a, b]` into panels of
//!   length `2π/t`, so no panel ever sees more than one period.
//!
//! Panel contributions are combined with Neumaier summation in ascending
//! panel order, so a given subdivision always produces the same bits.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use thiserror::Error;

/// Default relative tolerance used by the analytic layer.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Absolute floor below which an integral counts as exactly zero.
pub const ABSOLUTE_FLOOR: f64 = 1e-300;

const MAX_INTERVALS: usize = 20_000;
const MAX_INITIAL_PANELS: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("endpoint exponent {0} <= -1: integral diverges")]
    NonIntegrable(f64),
    #[error(
        "oscillation frequency {t} over width {width} needs more than {MAX_INITIAL_PANELS} panels"
    )]
    TooManyPanels { t: f64, width: f64 },
    #[error("limit extrapolation needs >= 3 grid points spanning >= 2 decades")]
    GridTooShort,
    #[error("tail estimates do not settle: estimate {estimate}, spread {spread}")]
    NotConverging { estimate: f64, spread: f64 },
}

/// A one-dimensional integrand on `[a, b]` with optional structural hints.
pub struct IntegrandSpec<F> {
    pub f: F,
    pub a: f64,
    pub b: f64,
    /// `p` such that `f(x) ~ (x-a)^p` as `x → a⁺`.
    pub endpoint_exponent: Option<f64>,
    /// `t` for integrands carrying factors like `1 - cos(xt)`.
    pub oscillation_frequency: Option<f64>,
}

impl<F: Fn(f64) -> f64> IntegrandSpec<F> {
    pub fn new(f: F, a: f64, b: f64) -> Self {
        Self {
            f,
            a,
            b,
            endpoint_exponent: None,
            oscillation_frequency: None,
        }
    }

    pub fn endpoint_exponent(mut self, p: f64) -> Self {
        self.endpoint_exponent = Some(p);
        self
    }

    pub fn oscillation_frequency(mut self, t: f64) -> Self {
        self.oscillation_frequency = Some(t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// 21-point Kronrod estimate with rescaled error.
fn gk21<G: Fn(f64) -> f64>(g: &G, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = g(center);
    let mut res_g = 0.0;
    let mut res_k = fc * WGK[10];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = g(center - dx);
        let f2 = g(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
    /// Evaluated in the substituted variable of the first panel.
    mapped: bool,
    value: f64,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Interval {}

impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; ties broken by position for determinism.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.mapped.cmp(&self.mapped))
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

/// Integrates `spec.f` over `[spec.a, spec.b]` to relative tolerance `tol`.
///
/// Failure to reach `tol` is not an error: the best estimate comes back with
/// `converged == false`.
pub fn integrate<F: Fn(f64) -> f64>(
    spec: &IntegrandSpec<F>,
    tol: f64,
) -> Result<QuadResult, QuadError> {
    let (a, b) = (spec.a, spec.b);
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(QuadError::InvalidInterval { a, b });
    }
    if !(tol > 0.0) {
        return Err(QuadError::InvalidTolerance(tol));
    }
    if let Some(p) = spec.endpoint_exponent {
        if !(p > -1.0) {
            return Err(QuadError::NonIntegrable(p));
        }
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
            converged: true,
        });
    }

    let mut breaks = vec![a];
    match spec.oscillation_frequency {
        Some(t) if t.abs() > 0.0 => {
            let period = TAU / t.abs();
            let count = ((b - a) / period).ceil();
            if count > MAX_INITIAL_PANELS as f64 {
                return Err(QuadError::TooManyPanels { t, width: b - a });
            }
            for k in 1..count as usize {
                breaks.push(a + k as f64 * period);
            }
        }
        _ => {}
    }
    breaks.push(b);

    let f = &spec.f;
    let first_width = breaks[1] - a;
    let exponent_m = spec
        .endpoint_exponent
        .map(|p| (2.0 / (p + 1.0)).max(1.0))
        .unwrap_or(1.0);
    let mapped = move |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let um1 = u.powf(exponent_m - 1.0);
        let jac = first_width * exponent_m * um1;
        if jac == 0.0 {
            return 0.0;
        }
        f(a + first_width * um1 * u) * jac
    };
    let use_map = spec.endpoint_exponent.is_some();

    let eval = |lo: f64, hi: f64, is_mapped: bool| -> Interval {
        let (value, error) = if is_mapped {
            gk21(&mapped, lo, hi)
        } else {
            gk21(f, lo, hi)
        };
        Interval {
            lo,
            hi,
            mapped: is_mapped,
            value,
            error,
        }
    };

    let mut heap = BinaryHeap::with_capacity(breaks.len() + 64);
    let mut evaluations = 0usize;
    for (k, w) in breaks.windows(2).enumerate() {
        let iv = if k == 0 && use_map {
            eval(0.0, 1.0, true)
        } else {
            eval(w[0], w[1], false)
        };
        evaluations += 21;
        heap.push(iv);
    }

    let total = |heap: &BinaryHeap<Interval>| -> (f64, f64) {
        let mut ivs: Vec<&Interval> = heap.iter().collect();
        ivs.sort_by(|x, y| y.mapped.cmp(&x.mapped).then(x.lo.total_cmp(&y.lo)));
        let v: CompensatedSum = ivs.iter().map(|iv| iv.value).collect();
        let e: CompensatedSum = ivs.iter().map(|iv| iv.error).collect();
        (v.value(), e.value())
    };

    let (mut value, mut error) = total(&heap);
    let mut since_resum = 0usize;
    let limit = MAX_INTERVALS + breaks.len();
    let done = |v: f64, e: f64| e <= tol * v.abs() || e <= ABSOLUTE_FLOOR;
    while !done(value, error) && heap.len() < limit {
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // Interval exhausted at machine resolution.
            heap.push(worst);
            break;
        }
        let left = eval(worst.lo, mid, worst.mapped);
        let right = eval(mid, worst.hi, worst.mapped);
        evaluations += 42;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        since_resum += 1;
        if since_resum >= 256 || done(value, error) {
            let (v, e) = total(&heap);
            value = v;
            error = e;
            since_resum = 0;
        }
    }
    let (value_final, error_final) = total(&heap);
    Ok(QuadResult {
        value: value_final,
        error_estimate: error_final,
        evaluations,
        converged: done(value_final, error_final),
    })
}

/// Estimate of `lim_{t→∞} f(t)` with an uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEstimate {
    pub estimate: f64,
    pub uncertainty: f64,
}

/// Extrapolates `f(t)` to `t → ∞` from samples on an ascending grid.
///
/// The tail is modelled as `c + a/t + b·ln(t)/t` (the `ln t/t` term only
/// with five or more points), which absorbs both algebraic `1/t` corrections
/// and the logarithmic growth of ohmic decoherence exponents. The estimate is
/// the least-squares `c` over the full grid; the uncertainty is its shift when
/// the smallest-`t` point is dropped.
pub fn limit_at_infinity<F: Fn(f64) -> f64>(
    f: F,
    t_grid: &[f64],
) -> Result<LimitEstimate, QuadError> {
    let n = t_grid.len();
    if n < 3 || !t_grid.windows(2).all(|w| w[0] < w[1]) || t_grid[0] <= 0.0 {
        return Err(QuadError::GridTooShort);
    }
    if t_grid[n - 1] / t_grid[0] < 100.0 * (1.0 - 1e-12) {
        return Err(QuadError::GridTooShort);
    }
    let ys: Vec<f64> = t_grid.iter().map(|&t| f(t)).collect();
    let n_basis = if n >= 5 { 3 } else { 2 };
    let basis = move |t: f64| {
        let mut row = vec![1.0, 1.0 / t];
        if n_basis == 3 {
            row.push(t.ln() / t);
        }
        row
    };
    let nb_for = |m: usize| n_basis.min(m.saturating_sub(1)).max(1);
    let fit_from = |start: usize| -> Option<Vec<f64>> {
        let nb = nb_for(n - start);
        crate::fit::least_squares(&t_grid[start..], &ys[start..], nb, |t| {
            basis(t)[..nb].to_vec()
        })
    };
    let full = fit_from(0).ok_or(QuadError::GridTooShort)?;
    let estimate = full[0];
    let alt = fit_from(1).ok_or(QuadError::GridTooShort)?[0];
    // A sequence the model cannot describe shows up as a large residual even
    // when dropping one point barely moves the intercept.
    let misfit = t_grid
        .iter()
        .zip(&ys)
        .map(|(&t, &y)| {
            let fitted: f64 = basis(t)[..full.len()]
                .iter()
                .zip(&full)
                .map(|(b, c)| b * c)
                .sum();
            (y - fitted).abs()
        })
        .fold(0.0, f64::max);
    let spread = (estimate - alt).abs().max(misfit);
    if !estimate.is_finite() || !spread.is_finite() || spread > 0.25 * estimate.abs().max(1.0) {
        return Err(QuadError::NotConverging { estimate, spread });
    }
    Ok(LimitEstimate {
        estimate,
        uncertainty: spread,
    })
}

/// `n` points geometrically spaced over `[lo, hi]`.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo * (r * k as f64).exp()
            }
        })
        .collect()
}

/// `n` points evenly spaced over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + h * k as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::si;

    #[test]
    fn inverse_square_root_endpoint() {
        let spec = IntegrandSpec::new(|x: f64| x.powf(-0.5), 0.0, 1.0).endpoint_exponent(-0.5);
        let r = integrate(&spec, 1e-10).unwrap();
        assert!(r.converged);
        assert!((r.value - 2.0).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn oscillatory_matches_sine_integral() {
        // ∫₀¹ (1 - cos 100ω)/ω² dω = 100 Si(100) - (1 - cos 100)
        let t = 100.0;
        let spec = IntegrandSpec::new(
            move |w: f64| {
                let s = (0.5 * w * t).sin();
                2.0 * s * s / (w * w)
            },
            0.0,
            1.0,
        )
        .endpoint_exponent(0.0)
        .oscillation_frequency(t);
        let r = integrate(&spec, 1e-10).unwrap();
        let exact = t * si(t) - (1.0 - t.cos());
        assert!(r.converged);
        assert!(
            ((r.value - exact) / exact).abs() < 1e-10,
            "{} vs {exact}",
            r.value
        );
        assert!((exact - 156.084_865_561_193_3).abs() < 1e-9);
    }

    #[test]
    fn zero_width_interval() {
        let r = integrate(&IntegrandSpec::new(|x: f64| x, 0.5, 0.5), 1e-8).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn exactly_zero_integrand_converges() {
        let r = integrate(&IntegrandSpec::new(|_x: f64| 0.0, 0.0, 3.0), 1e-12).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = |x: f64| x;
        assert!(matches!(
            integrate(&IntegrandSpec::new(f, 1.0, 0.0), 1e-8),
            Err(QuadError::InvalidInterval { .. })
        ));
        assert!(matches!(
            integrate(&IntegrandSpec::new(f, 0.0, 1.0), 0.0),
            Err(QuadError::InvalidTolerance(_))
        ));
        assert!(matches!(
            integrate(
                &IntegrandSpec::new(f, 0.0, 1.0).endpoint_exponent(-1.0),
                1e-8
            ),
            Err(QuadError::NonIntegrable(_))
        ));
    }

    #[test]
    fn unreachable_tolerance_reports_best_estimate() {
        // sin(1/x) oscillates infinitely fast near 0; 1e-15 relative is out of reach.
        let spec = IntegrandSpec::new(|x: f64| (1.0 / x).sin(), 1e-6, 1.0);
        let r = integrate(&spec, 1e-15).unwrap();
        assert!(!r.converged);
        assert!((r.value - 0.504_067_061_906_928_4).abs() < 1e-4);
    }

    #[test]
    fn limit_of_known_tail() {
        let est = limit_at_infinity(|t| 3.0 + 1.0 / t, &[10.0, 100.0, 1000.0]).unwrap();
        assert!((est.estimate - 3.0).abs() < 1e-2);
        let est = limit_at_infinity(
            |t| 0.5 + 2.0 / t + 4.0 * t.ln() / t,
            &geomspace(10.0, 1e4, 12),
        )
        .unwrap();
        assert!((est.estimate - 0.5).abs() < 1e-9);
    }

    #[test]
    fn limit_rejects_divergent_and_short_grids() {
        assert!(matches!(
            limit_at_infinity(|t| t, &geomspace(1.0, 1e3, 10)),
            Err(QuadError::NotConverging { .. })
        ));
        assert!(matches!(
            limit_at_infinity(|t| t, &[1.0, 2.0, 3.0]),
            Err(QuadError::GridTooShort)
        ));
    }
}
