//! Random-level environments.
//!
//! Level sequences come either from i.i.d. spacing draws (Poisson, Wigner
//! surmise) or from unfolded Gaussian matrix spectra. Together with a random
//! traceless coupling `Q` they feed a kernel estimator of the spectral
//! function
//!
//! ```text
//! R̂(ω) = (π/M) Σ_{m≠m'} |⟨m|Q|m'⟩|² K_σ(ε_m - ε_m' - ω)
//! ```
//!
//! whose `ω → 0⁺` limit gives the Markovian dephasing rate `γ = R̂(0⁺)/2`.
//! Diagonal terms `m = m'` only add a spike at `ω = 0` and are left out.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit;
use crate::linalg::{symmetric_eigenvalues, HermitianMatrix, LinalgError};
use crate::seed::{rng_for, stream_id, StreamTag};

/// Smallest ensemble accepted by the spectral estimator.
pub const MIN_REALIZATIONS: usize = 20;

/// Default kernel width in units of the mean spacing.
pub const DEFAULT_BANDWIDTH: f64 = 0.05;

/// Bootstrap resamples used for standard errors.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

const MIN_MATRIX_LEVELS: usize = 16;
const UNFOLD_DEGREE: usize = 7;
const KERNEL_REACH: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmtError {
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unfolding failed: {0}")]
    Unfolding(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Nearest-neighbour spacing law in units of the mean spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingLaw {
    Poisson,
    /// Wigner surmise with repulsion exponent β ∈ {1, 2, 4}.
    Surmise(u8),
}

fn surmise_b(beta: u8) -> f64 {
    match beta {
        1 => PI / 4.0,
        2 => 4.0 / PI,
        _ => 64.0 / (9.0 * PI),
    }
}

impl SpacingLaw {
    pub fn surmise(beta: u8) -> Result<Self, RmtError> {
        match beta {
            1 | 2 | 4 => Ok(SpacingLaw::Surmise(beta)),
            _ => Err(RmtError::InvalidEnsemble(format!(
                "β must be 1, 2 or 4, got {beta}"
            ))),
        }
    }

    /// `p(s)`; zero for `s < 0`.
    pub fn pdf(self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match self {
            SpacingLaw::Poisson => (-s).exp(),
            SpacingLaw::Surmise(1) => 0.5 * PI * s * (-0.25 * PI * s * s).exp(),
            SpacingLaw::Surmise(2) => 32.0 / (PI * PI) * s * s * (-4.0 * s * s / PI).exp(),
            SpacingLaw::Surmise(_) => {
                let a = 2f64.powi(18) / (3f64.powi(6) * PI.powi(3));
                a * s.powi(4) * (-64.0 * s * s / (9.0 * PI)).exp()
            }
        }
    }

    /// `∫₀^s p`.
    pub fn cdf(self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            SpacingLaw::Poisson => -(-s).exp_m1(),
            SpacingLaw::Surmise(1) => -(-0.25 * PI * s * s).exp_m1(),
            SpacingLaw::Surmise(beta) => {
                // Regularized incomplete gamma P(k/2, x) with x = b s².
                let x = surmise_b(beta) * s * s;
                let rx = x.sqrt();
                let p32 = libm::erf(rx) - 2.0 * rx / PI.sqrt() * (-x).exp();
                if beta == 2 {
                    p32
                } else {
                    p32 - x * rx * (-x).exp() / (0.75 * PI.sqrt())
                }
            }
        }
    }

    /// One spacing with unit mean.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            SpacingLaw::Poisson => Exp1.sample(rng),
            SpacingLaw::Surmise(beta) => {
                // p ∝ s^β e^{-b s²} is a chi law with β+1 degrees of freedom.
                let sigma = (0.5 / surmise_b(beta)).sqrt();
                let sum: f64 = (0..=beta)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z * z
                    })
                    .sum();
                sigma * sum.sqrt()
            }
        }
    }
}

/// `p(s)` for the given law.
pub fn spacing_pdf(law: SpacingLaw, s: f64) -> f64 {
    law.pdf(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum EnsembleKind {
    PoissonSpacings,
    GoeMatrix,
    GueMatrix,
    SurmiseSpacings(u8),
}

impl EnsembleKind {
    /// Spacing law the unfolded spectrum should follow.
    pub fn spacing_law(self) -> SpacingLaw {
        match self {
            EnsembleKind::PoissonSpacings => SpacingLaw::Poisson,
            EnsembleKind::GoeMatrix => SpacingLaw::Surmise(1),
            EnsembleKind::GueMatrix => SpacingLaw::Surmise(2),
            EnsembleKind::SurmiseSpacings(b) => SpacingLaw::Surmise(b),
        }
    }

    pub fn is_matrix(self) -> bool {
        matches!(self, EnsembleKind::GoeMatrix | EnsembleKind::GueMatrix)
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleKind::PoissonSpacings => f.write_str("poisson"),
            EnsembleKind::GoeMatrix => f.write_str("goe"),
            EnsembleKind::GueMatrix => f.write_str("gue"),
            EnsembleKind::SurmiseSpacings(b) => write!(f, "surmise-b{b}"),
        }
    }
}

impl FromStr for EnsembleKind {
    type Err = RmtError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "poisson" => Ok(EnsembleKind::PoissonSpacings),
            "goe" => Ok(EnsembleKind::GoeMatrix),
            "gue" => Ok(EnsembleKind::GueMatrix),
            "surmise-b1" => Ok(EnsembleKind::SurmiseSpacings(1)),
            "surmise-b2" => Ok(EnsembleKind::SurmiseSpacings(2)),
            "surmise-b4" => Ok(EnsembleKind::SurmiseSpacings(4)),
            _ => Err(RmtError::InvalidEnsemble(format!("unknown ensemble '{s}'"))),
        }
    }
}

impl From<EnsembleKind> for String {
    fn from(k: EnsembleKind) -> Self {
        k.to_string()
    }
}

impl TryFrom<String> for EnsembleKind {
    type Error = RmtError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelEnsemble {
    pub kind: EnsembleKind,
    pub m: usize,
    pub delta: f64,
}

impl LevelEnsemble {
    pub fn new(kind: EnsembleKind, m: usize, delta: f64) -> Result<Self, RmtError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(RmtError::InvalidEnsemble(format!(
                "Δ must be > 0, got {delta}"
            )));
        }
        if let EnsembleKind::SurmiseSpacings(b) = kind {
            SpacingLaw::surmise(b)?;
        }
        let min = if kind.is_matrix() {
            MIN_MATRIX_LEVELS
        } else {
            2
        };
        if m < min {
            return Err(RmtError::InvalidEnsemble(format!(
                "{kind} needs M >= {min}, got {m}"
            )));
        }
        Ok(Self { kind, m, delta })
    }
}

/// Strictly ascending levels of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub levels: Vec<f64>,
    pub ensemble: LevelEnsemble,
    pub seed: u64,
    pub realization: u64,
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn mean_spacing(&self) -> f64 {
        let n = self.levels.len();
        (self.levels[n - 1] - self.levels[0]) / (n - 1) as f64
    }
}

/// Draws realization `realization` of `ens` from the master seed.
///
/// Spacing kinds start at 0 and cumulate i.i.d. spacings with mean `Δ`.
/// Matrix kinds diagonalize a `2M × 2M` Gaussian matrix, keep the central `M`
/// levels, unfold them with a degree-7 fit of the level staircase and rescale
/// to mean spacing `Δ`.
pub fn sample_levels(
    ens: &LevelEnsemble,
    seed: u64,
    realization: u64,
) -> Result<LevelSet, RmtError> {
    let mut rng = rng_for(seed, stream_id(StreamTag::Levels, realization, 0));
    sample_levels_with(ens, &mut rng).map(|levels| LevelSet {
        levels,
        ensemble: *ens,
        seed,
        realization,
    })
}

pub(crate) fn sample_levels_with(
    ens: &LevelEnsemble,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, RmtError> {
    let m = ens.m;
    match ens.kind {
        EnsembleKind::PoissonSpacings | EnsembleKind::SurmiseSpacings(_) => {
            let law = ens.kind.spacing_law();
            let mut levels = Vec::with_capacity(m);
            let mut e = 0.0;
            levels.push(e);
            while levels.len() < m {
                let s = law.sample(rng);
                // A zero spacing (probability ~0) would break strict ordering.
                if s > 0.0 {
                    e += ens.delta * s;
                    levels.push(e);
                }
            }
            Ok(levels)
        }
        EnsembleKind::GoeMatrix | EnsembleKind::GueMatrix => {
            let n = 2 * m;
            let raw = if ens.kind == EnsembleKind::GoeMatrix {
                symmetric_eigenvalues(goe_matrix(n, rng))?
            } else {
                HermitianMatrix::new(gue_matrix(n, rng))?.eigenvalues()?
            };
            let start = (n - m) / 2;
            unfold(&raw[start..start + m], ens.delta)
        }
    }
}

fn goe_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(n, n);
    let off = 0.5f64.sqrt();
    for j in 0..n {
        for i in 0..=j {
            let z: f64 = StandardNormal.sample(rng);
            if i == j {
                a[(i, i)] = z;
            } else {
                a[(i, j)] = off * z;
                a[(j, i)] = off * z;
            }
        }
    }
    a
}

fn gue_matrix(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let mut a = DMatrix::<Complex64>::zeros(n, n);
    let off = 0.5f64.sqrt();
    for j in 0..n {
        for i in 0..=j {
            let re: f64 = StandardNormal.sample(rng);
            if i == j {
                a[(i, i)] = Complex64::new(re, 0.0);
            } else {
                let im: f64 = StandardNormal.sample(rng);
                let z = Complex64::new(off * re, off * im);
                a[(i, j)] = z;
                a[(j, i)] = z.conj();
            }
        }
    }
    a
}

fn unfold(raw: &[f64], delta: f64) -> Result<Vec<f64>, RmtError> {
    let m = raw.len();
    let (lo, hi) = (raw[0], raw[m - 1]);
    if !(hi > lo) {
        return Err(RmtError::Unfolding("degenerate spectrum".into()));
    }
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let xs: Vec<f64> = raw.iter().map(|&e| (e - mid) / half).collect();
    let ys: Vec<f64> = (0..m).map(|i| i as f64).collect();
    // Small spectra can make the degree-7 fit wiggle; fall back to lower
    // degrees until the fitted staircase is monotone on the levels.
    let mut degree = UNFOLD_DEGREE.min(m - 2);
    let u = loop {
        let coeffs = fit::least_squares(&xs, &ys, degree + 1, |x| {
            (0..=degree).map(|k| x.powi(k as i32)).collect()
        })
        .ok_or_else(|| RmtError::Unfolding("staircase fit is rank deficient".into()))?;
        let u: Vec<f64> = xs.iter().map(|&x| fit::polyval(&coeffs, x)).collect();
        if u.windows(2).all(|w| w[0] < w[1]) {
            break u;
        }
        if degree == 1 {
            return Err(RmtError::Unfolding(
                "fitted staircase is not monotone".into(),
            ));
        }
        degree -= 1;
    };
    let scale = delta * (m - 1) as f64 / (u[m - 1] - u[0]);
    Ok(u.iter().map(|&v| (v - u[0]) * scale).collect())
}

/// Histogram density of `samples` on `bins` equal bins over `[0, s_max]`,
/// normalized by the total sample count. Returns `(centre, density)` pairs.
pub fn spacing_histogram(samples: &[f64], bins: usize, s_max: f64) -> Vec<(f64, f64)> {
    let width = s_max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        if s >= 0.0 && s < s_max {
            counts[((s / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total = samples.len().max(1) as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| ((i as f64 + 0.5) * width, c as f64 / (total * width)))
        .collect()
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical distribution
/// of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = cdf(s);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Hermitian traceless coupling in the level eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix(DMatrix<Complex64>);

impl CouplingMatrix {
    /// Validates `Q = Q†` exactly and `|Tr Q| <= 1e-10`.
    pub fn new(q: DMatrix<Complex64>) -> Result<Self, RmtError> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(RmtError::InvalidArgument(
                "Q must be square and non-empty".into(),
            ));
        }
        if q != q.adjoint() {
            return Err(RmtError::InvalidArgument("Q must be Hermitian".into()));
        }
        let tr = q.trace().re;
        if tr.abs() > 1e-10 {
            return Err(RmtError::InvalidArgument(format!("Tr Q = {tr:e}")));
        }
        Ok(Self(q))
    }

    pub fn zero(m: usize) -> Self {
        Self(DMatrix::zeros(m, m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    /// `Q·√q̄²`, so unit-variance draws get `⟨|Q_mm'|²⟩ = q̄²`.
    pub fn scaled(&self, qbar2: f64) -> Self {
        Self(self.0.map(|z| z * qbar2.sqrt()))
    }

    /// `|⟨m|Q|m'⟩|²`.
    pub fn weight(&self, m: usize, mp: usize) -> f64 {
        self.0[(m, mp)].norm_sqr()
    }

    /// Mean of `|Q_mm'|²` over `m ≠ m'`.
    pub fn mean_offdiagonal_sq(&self) -> f64 {
        let m = self.dim();
        let mut sum = 0.0;
        for j in 0..m {
            for i in 0..m {
                if i != j {
                    sum += self.weight(i, j);
                }
            }
        }
        sum / (m * (m - 1)) as f64
    }
}

/// Gaussian Hermitian `Q` with unit-variance off-diagonal entries, real
/// unit-variance diagonal, trace projected to zero.
pub fn sample_coupling(m: usize, seed: u64, realization: u64) -> CouplingMatrix {
    let mut rng = rng_for(seed, stream_id(StreamTag::Coupling, realization, 0));
    sample_coupling_with(m, &mut rng)
}

pub(crate) fn sample_coupling_with(m: usize, rng: &mut ChaCha8Rng) -> CouplingMatrix {
    let mut q = DMatrix::<Complex64>::zeros(m, m);
    let off = 0.5f64.sqrt();
    for j in 0..m {
        for i in 0..=j {
            let re: f64 = StandardNormal.sample(rng);
            if i == j {
                q[(i, i)] = Complex64::new(re, 0.0);
            } else {
                let im: f64 = StandardNormal.sample(rng);
                let z = Complex64::new(off * re, off * im);
                q[(i, j)] = z;
                q[(j, i)] = z.conj();
            }
        }
    }
    let shift = q.trace().re / m as f64;
    for i in 0..m {
        q[(i, i)].re -= shift;
    }
    CouplingMatrix(q)
}

/// Which level pairs enter the estimator sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    /// Every `m ≠ m'`; follows the pair correlation of the levels.
    #[default]
    All,
    /// Adjacent levels only; follows the nearest-neighbour spacing law.
    NearestNeighbour,
}

fn gaussian_kernel(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// `R̂(ω)` on `omega_grid` for a single realization.
///
/// Each unordered pair contributes `K(|d| - |ω|) + K(|d| + |ω|)`, so the
/// result is exactly even in `ω`.
pub fn realization_curve(
    levels: &LevelSet,
    coupling: &CouplingMatrix,
    omega_grid: &[f64],
    bandwidth: f64,
    pairs: PairSelection,
) -> Result<Vec<f64>, RmtError> {
    let m = levels.len();
    if coupling.dim() != m {
        return Err(RmtError::InvalidArgument(format!(
            "coupling is {}x{} but there are {m} levels",
            coupling.dim(),
            coupling.dim()
        )));
    }
    if !(bandwidth > 0.0) {
        return Err(RmtError::InvalidArgument("bandwidth must be > 0".into()));
    }
    let reach = KERNEL_REACH * bandwidth;
    let cutoff = omega_grid.iter().fold(0.0f64, |a, w| a.max(w.abs())) + reach;
    let e = &levels.levels;
    let mut diffs: Vec<(f64, f64)> = Vec::new();
    match pairs {
        PairSelection::All => {
            for j in 0..m {
                for i in (j + 1)..m {
                    let d = e[i] - e[j];
                    if d > cutoff {
                        break;
                    }
                    diffs.push((d, coupling.weight(i, j)));
                }
            }
        }
        PairSelection::NearestNeighbour => {
            for j in 0..m - 1 {
                let d = e[j + 1] - e[j];
                if d <= cutoff {
                    diffs.push((d, coupling.weight(j + 1, j)));
                }
            }
        }
    }
    diffs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let norm = PI / m as f64;
    Ok(omega_grid
        .iter()
        .map(|&w| {
            let a = w.abs();
            let start = diffs.partition_point(|p| p.0 < a - reach);
            let sum: f64 = diffs[start..]
                .iter()
                .take_while(|p| p.0 <= a + reach)
                .map(|&(d, q)| {
                    q * (gaussian_kernel(d - a, bandwidth) + gaussian_kernel(d + a, bandwidth))
                })
                .sum();
            norm * sum
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub omega_grid: Vec<f64>,
    pub r_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub bandwidth: f64,
    pub samples: usize,
    /// Per-realization curves, kept for bootstrapping derived quantities.
    #[serde(skip)]
    pub curves: Vec<Vec<f64>>,
    #[serde(skip)]
    bootstrap_seed: u64,
}

/// Resample indices for bootstrap replicate `b`, identical for every
/// statistic derived from the same estimate.
fn bootstrap_indices(seed: u64, b: usize, n: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, stream_id(StreamTag::Bootstrap, b as u64, 0));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let mu = mean(xs.iter().copied());
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Bootstrap standard error of the mean of `values` (one per realization).
fn bootstrap_stderr(values: &[f64], seed: u64) -> f64 {
    let n = values.len();
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|b| mean(bootstrap_indices(seed, b, n).into_iter().map(|i| values[i])))
        .collect();
    std_dev(&reps)
}

impl SpectralEstimate {
    /// Ensemble mean and bootstrap errors from per-realization curves.
    pub fn from_curves(
        omega_grid: Vec<f64>,
        curves: Vec<Vec<f64>>,
        bandwidth: f64,
        bootstrap_seed: u64,
    ) -> Result<Self, RmtError> {
        let n = curves.len();
        if n < MIN_REALIZATIONS {
            return Err(RmtError::InsufficientSamples {
                needed: MIN_REALIZATIONS,
                got: n,
            });
        }
        if curves.iter().any(|c| c.len() != omega_grid.len()) {
            return Err(RmtError::InvalidArgument(
                "curve length does not match grid".into(),
            ));
        }
        let k = omega_grid.len();
        let mut r_hat = vec![0.0; k];
        for c in &curves {
            for (acc, v) in r_hat.iter_mut().zip(c) {
                *acc += v;
            }
        }
        for v in r_hat.iter_mut() {
            *v /= n as f64;
        }
        let mut boot = vec![vec![0.0; k]; BOOTSTRAP_RESAMPLES];
        for (b, row) in boot.iter_mut().enumerate() {
            for i in bootstrap_indices(bootstrap_seed, b, n) {
                for (acc, v) in row.iter_mut().zip(&curves[i]) {
                    *acc += v;
                }
            }
            for v in row.iter_mut() {
                *v /= n as f64;
            }
        }
        let stderr = (0..k)
            .map(|j| std_dev(&boot.iter().map(|row| row[j]).collect::<Vec<_>>()))
            .collect();
        Ok(Self {
            omega_grid,
            r_hat,
            stderr,
            bandwidth,
            samples: n,
            curves,
            bootstrap_seed,
        })
    }

    /// Linear interpolation of `R̂` and its error at `omega`.
    pub fn at(&self, omega: f64) -> Option<(f64, f64)> {
        let g = &self.omega_grid;
        let j = g.partition_point(|&w| w < omega);
        if j < g.len() && g[j] == omega {
            return Some((self.r_hat[j], self.stderr[j]));
        }
        if j == 0 || j == g.len() {
            return None;
        }
        let f = (omega - g[j - 1]) / (g[j] - g[j - 1]);
        Some((
            self.r_hat[j - 1] + f * (self.r_hat[j] - self.r_hat[j - 1]),
            self.stderr[j - 1] + f * (self.stderr[j] - self.stderr[j - 1]),
        ))
    }
}

/// Estimator over explicit `(levels, coupling)` realizations.
pub fn estimate_spectral_function(
    realizations: &[(LevelSet, CouplingMatrix)],
    omega_grid: &[f64],
    bandwidth: f64,
    pairs: PairSelection,
    bootstrap_seed: u64,
) -> Result<SpectralEstimate, RmtError> {
    if realizations.len() < MIN_REALIZATIONS {
        return Err(RmtError::InsufficientSamples {
            needed: MIN_REALIZATIONS,
            got: realizations.len(),
        });
    }
    let curves = realizations
        .iter()
        .map(|(l, q)| realization_curve(l, q, omega_grid, bandwidth, pairs))
        .collect::<Result<Vec<_>, _>>()?;
    SpectralEstimate::from_curves(omega_grid.to_vec(), curves, bandwidth, bootstrap_seed)
}

/// Parameters of a sampled spectral-function run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralRun {
    pub ensemble: LevelEnsemble,
    pub qbar2: f64,
    pub realizations: usize,
    pub seed: u64,
    pub bandwidth: f64,
    #[serde(default)]
    pub pairs: PairSelection,
}

/// Samples levels and couplings for every realization (in parallel on the
/// current rayon pool) and runs the estimator. Realization `r` always uses
/// the same sub-streams, so the result does not depend on thread count.
pub fn sample_spectral_estimate(
    run: &SpectralRun,
    omega_grid: &[f64],
) -> Result<SpectralEstimate, RmtError> {
    if run.realizations < MIN_REALIZATIONS {
        return Err(RmtError::InsufficientSamples {
            needed: MIN_REALIZATIONS,
            got: run.realizations,
        });
    }
    if !(run.qbar2 >= 0.0) {
        return Err(RmtError::InvalidArgument("q̄² must be >= 0".into()));
    }
    let curves = (0..run.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let levels = sample_levels(&run.ensemble, run.seed, r)?;
            let q = sample_coupling(run.ensemble.m, run.seed, r).scaled(run.qbar2);
            realization_curve(&levels, &q, omega_grid, run.bandwidth, run.pairs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    SpectralEstimate::from_curves(omega_grid.to_vec(), curves, run.bandwidth, run.seed)
}

/// `π q̄² p(|ω|/Δ)/Δ`: the spacing law read as a density per unit frequency.
pub fn surmise_prediction(law: SpacingLaw, qbar2: f64, omega: f64, delta: f64) -> f64 {
    PI * qbar2 * law.pdf(omega.abs() / delta) / delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    /// `½·max(intercept, 0)`.
    pub gamma: f64,
    pub stderr: f64,
    /// Extrapolated `R̂(0⁺)` before clamping.
    pub intercept: f64,
    pub negative_intercept: bool,
    pub window: (f64, f64),
    pub points: usize,
}

/// Quadratic fit of `R̂` on `[σ, 10σ]` extrapolated to `ω = 0⁺`.
///
/// The intercept is linear in the ensemble mean, so its bootstrap error uses
/// the same resamples as the estimate itself.
pub fn rate_estimate(est: &SpectralEstimate) -> Result<RateEstimate, RmtError> {
    let lo = est.bandwidth * (1.0 - 1e-9);
    let hi = 10.0 * est.bandwidth * (1.0 + 1e-9);
    let idx: Vec<usize> = (0..est.omega_grid.len())
        .filter(|&i| est.omega_grid[i] >= lo && est.omega_grid[i] <= hi)
        .collect();
    if idx.len() < 3 {
        return Err(RmtError::InsufficientSamples {
            needed: 3,
            got: idx.len(),
        });
    }
    let xs: Vec<f64> = idx
        .iter()
        .map(|&i| est.omega_grid[i] / est.bandwidth)
        .collect();
    let w = fit::least_squares_weights(&xs, 3, |x| vec![1.0, x, x * x])
        .ok_or_else(|| RmtError::InvalidArgument("rate window is degenerate".into()))?;
    let intercept_of =
        |curve: &[f64]| -> f64 { idx.iter().zip(&w[0]).map(|(&i, c)| c * curve[i]).sum() };
    let intercept = intercept_of(&est.r_hat);
    let per_realization: Vec<f64> = est.curves.iter().map(|c| intercept_of(c)).collect();
    let stderr = 0.5 * bootstrap_stderr(&per_realization, est.bootstrap_seed);
    Ok(RateEstimate {
        gamma: 0.5 * intercept.max(0.0),
        stderr,
        intercept,
        negative_intercept: intercept < 0.0,
        window: (est.bandwidth, 10.0 * est.bandwidth),
        points: idx.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{self, IntegrandSpec};
    use proptest::prelude::*;

    fn laws() -> [SpacingLaw; 4] {
        [
            SpacingLaw::Poisson,
            SpacingLaw::Surmise(1),
            SpacingLaw::Surmise(2),
            SpacingLaw::Surmise(4),
        ]
    }

    #[test]
    fn pdf_values_at_origin() {
        assert_eq!(spacing_pdf(SpacingLaw::Poisson, 0.0), 1.0);
        for b in [1, 2, 4] {
            assert_eq!(spacing_pdf(SpacingLaw::Surmise(b), 0.0), 0.0);
        }
        assert!(SpacingLaw::surmise(3).is_err());
    }

    #[test]
    fn pdfs_are_normalized_with_unit_mean() {
        for law in laws() {
            let mass =
                quad::integrate(&IntegrandSpec::new(|s| law.pdf(s), 0.0, 60.0), 1e-12).unwrap();
            let first =
                quad::integrate(&IntegrandSpec::new(|s| s * law.pdf(s), 0.0, 60.0), 1e-12).unwrap();
            assert!((mass.value - 1.0).abs() < 1e-8, "{law:?} {}", mass.value);
            assert!((first.value - 1.0).abs() < 1e-8, "{law:?} {}", first.value);
        }
    }

    #[test]
    fn cdfs_match_integrated_pdfs() {
        for law in laws() {
            for s in [0.1, 0.5, 1.0, 2.0, 3.5] {
                let q =
                    quad::integrate(&IntegrandSpec::new(|x| law.pdf(x), 0.0, s), 1e-13).unwrap();
                assert!((law.cdf(s) - q.value).abs() < 1e-12, "{law:?} {s}");
            }
            assert!((law.cdf(50.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_spacings_follow_their_laws() {
        let mut rng = rng_for(7, 0);
        for law in laws() {
            let xs: Vec<f64> = (0..20_000).map(|_| law.sample(&mut rng)).collect();
            assert!(ks_statistic(&xs, |s| law.cdf(s)) < 0.015, "{law:?}");
        }
    }

    #[test]
    fn ensemble_parsing_round_trips() {
        for s in [
            "poisson",
            "goe",
            "gue",
            "surmise-b1",
            "surmise-b2",
            "surmise-b4",
        ] {
            let k: EnsembleKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
            assert_eq!(EnsembleKind::try_from(String::from(k)).unwrap(), k);
        }
        assert!("surmise-b3".parse::<EnsembleKind>().is_err());
    }

    #[test]
    fn ensemble_validation() {
        assert!(LevelEnsemble::new(EnsembleKind::GoeMatrix, 15, 1.0).is_err());
        assert!(LevelEnsemble::new(EnsembleKind::PoissonSpacings, 100, 0.0).is_err());
        assert!(LevelEnsemble::new(EnsembleKind::SurmiseSpacings(3), 100, 1.0).is_err());
        assert!(LevelEnsemble::new(EnsembleKind::GoeMatrix, 16, 1.0).is_ok());
    }

    #[test]
    fn poisson_mean_spacing() {
        let ens = LevelEnsemble::new(EnsembleKind::PoissonSpacings, 10_000, 1.0).unwrap();
        let l = sample_levels(&ens, 3, 0).unwrap();
        assert_eq!(l.len(), 10_000);
        assert!((l.mean_spacing() - 1.0).abs() < 0.02);
    }

    #[test]
    fn matrix_levels_are_unfolded() {
        for kind in [EnsembleKind::GoeMatrix, EnsembleKind::GueMatrix] {
            let ens = LevelEnsemble::new(kind, 100, 2.5).unwrap();
            let l = sample_levels(&ens, 11, 4).unwrap();
            assert_eq!(l.len(), 100);
            assert!(l.levels.windows(2).all(|w| w[0] < w[1]));
            assert!((l.mean_spacing() - 2.5).abs() < 0.05 * 2.5);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        for kind in [EnsembleKind::GoeMatrix, EnsembleKind::SurmiseSpacings(4)] {
            let ens = LevelEnsemble::new(kind, 40, 1.0).unwrap();
            let a = sample_levels(&ens, 99, 2).unwrap();
            let b = sample_levels(&ens, 99, 2).unwrap();
            let c = sample_levels(&ens, 99, 3).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.levels, c.levels);
        }
    }

    #[test]
    fn coupling_is_hermitian_and_traceless() {
        let q = sample_coupling(50, 5, 0);
        assert_eq!(q.matrix(), &q.matrix().adjoint());
        assert!(q.matrix().trace().norm() < 1e-10);
        assert!(CouplingMatrix::new(q.matrix().clone()).is_ok());
        let mut bad = q.matrix().clone();
        bad[(0, 0)] += Complex64::new(1.0, 0.0);
        assert!(CouplingMatrix::new(bad).is_err());
    }

    #[test]
    fn coupling_variance() {
        let mean: f64 = (0..50)
            .map(|r| sample_coupling(200, 1, r).mean_offdiagonal_sq())
            .sum::<f64>()
            / 50.0;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
        let scaled = sample_coupling(200, 1, 0).scaled(4.0).mean_offdiagonal_sq();
        assert!((scaled / sample_coupling(200, 1, 0).mean_offdiagonal_sq() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (0..n)
            .map(|i| -(1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        assert!(ks_statistic(&xs, |s| SpacingLaw::Poisson.cdf(s)) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn histogram_integrates_to_captured_fraction() {
        let xs = [0.1, 0.2, 0.3, 1.5, 9.0];
        let h = spacing_histogram(&xs, 10, 2.0);
        let mass: f64 = h.iter().map(|(_, d)| d * 0.2).sum();
        assert!((mass - 0.8).abs() < 1e-12);
    }

    #[test]
    fn surmise_prediction_units() {
        assert!((surmise_prediction(SpacingLaw::Poisson, 1.0, 0.0, 1.0) - PI).abs() < 1e-15);
        assert_eq!(
            surmise_prediction(SpacingLaw::Surmise(1), 1.0, 0.0, 1.0),
            0.0
        );
        let a = surmise_prediction(SpacingLaw::Poisson, 1.0, 0.0, 1.0);
        let b = surmise_prediction(SpacingLaw::Poisson, 1.0, 0.0, 2.0);
        assert!((b - 0.5 * a).abs() < 1e-15);
    }

    fn small_run(kind: EnsembleKind, qbar2: f64, pairs: PairSelection) -> SpectralRun {
        SpectralRun {
            ensemble: LevelEnsemble::new(kind, 60, 1.0).unwrap(),
            qbar2,
            realizations: 20,
            seed: 17,
            bandwidth: 0.05,
            pairs,
        }
    }

    #[test]
    fn estimate_is_even_in_omega() {
        let half = quad::linspace(0.0, 1.0, 21);
        let grid: Vec<f64> = half
            .iter()
            .rev()
            .map(|w| -w)
            .chain(half.iter().skip(1).copied())
            .collect();
        let est = sample_spectral_estimate(
            &small_run(EnsembleKind::PoissonSpacings, 1.0, PairSelection::All),
            &grid,
        )
        .unwrap();
        for i in 0..grid.len() {
            assert_eq!(est.r_hat[i], est.r_hat[grid.len() - 1 - i]);
            assert!(est.r_hat[i] >= 0.0);
        }
    }

    #[test]
    fn zero_coupling_gives_zero_rate() {
        let grid = quad::linspace(0.0, 1.0, 51);
        let est = sample_spectral_estimate(
            &small_run(EnsembleKind::GoeMatrix, 0.0, PairSelection::All),
            &grid,
        )
        .unwrap();
        let rate = rate_estimate(&est).unwrap();
        assert_eq!(rate.gamma, 0.0);
        assert_eq!(rate.stderr, 0.0);
        assert!(!rate.negative_intercept);
    }

    #[test]
    fn too_few_realizations_rejected() {
        let mut run = small_run(EnsembleKind::PoissonSpacings, 1.0, PairSelection::All);
        run.realizations = 19;
        assert!(matches!(
            sample_spectral_estimate(&run, &[0.0, 0.1]),
            Err(RmtError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn rate_window_needs_three_points() {
        let grid = vec![0.0, 0.1, 0.6, 1.0];
        let est = sample_spectral_estimate(
            &small_run(EnsembleKind::PoissonSpacings, 1.0, PairSelection::All),
            &grid,
        )
        .unwrap();
        assert!(matches!(
            rate_estimate(&est),
            Err(RmtError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn single_pair_curve() {
        let ens = LevelEnsemble::new(EnsembleKind::PoissonSpacings, 2, 1.0).unwrap();
        let levels = LevelSet {
            levels: vec![0.0, 0.7],
            ensemble: ens,
            seed: 0,
            realization: 0,
        };
        let q = CouplingMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(0.0, -2.0),
                Complex64::new(-0.5, 0.0),
            ],
        ))
        .unwrap();
        let c = realization_curve(&levels, &q, &[0.7], 0.1, PairSelection::All).unwrap();
        let expected = PI / 2.0 * 4.0 * (gaussian_kernel(0.0, 0.1) + gaussian_kernel(1.4, 0.1));
        assert!((c[0] - expected).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn nearest_neighbour_curve_is_bounded_by_all_pairs(seed in 0u64..1000) {
            let ens = LevelEnsemble::new(EnsembleKind::PoissonSpacings, 30, 1.0).unwrap();
            let l = sample_levels(&ens, seed, 0).unwrap();
            let q = sample_coupling(30, seed, 0);
            let grid = quad::linspace(0.0, 2.0, 21);
            let all = realization_curve(&l, &q, &grid, 0.05, PairSelection::All).unwrap();
            let nn = realization_curve(&l, &q, &grid, 0.05, PairSelection::NearestNeighbour).unwrap();
            for (a, n) in all.iter().zip(&nn) {
                prop_assert!(*n <= *a * (1.0 + 1e-12) + 1e-300);
            }
        }
    }
}
