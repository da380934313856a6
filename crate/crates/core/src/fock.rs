//! Brute-force oracle on a truncated Fock space.
//!
//! The continuum field is replaced by `K` discrete modes `(ω_j, g_j)` and
//! each mode's occupation is truncated at `n_max`. In the `σ₃` eigenbasis the
//! Hamiltonian is block diagonal, `diag[H₊, H₋]` with
//!
//! ```text
//! H_± = Σ_j ω_j a_j† a_j ± Σ_j ω_j (ḡ_j a_j + g_j a_j†)
//! ```
//!
//! Everything here is computed by explicit matrices and exact propagation;
//! nothing relies on the displacement algebra it is meant to check.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{EigenPair, HermitianMatrix, LinalgError};
use crate::quad::{self, IntegrandSpec, QuadError};
use crate::specfun::{DecoherenceCurve, FormFactor, Method, SpecError};
use crate::special::gauss_legendre;

/// Largest spin ⊗ bath dimension the oracle will build.
pub const DIMENSION_CAP: usize = 200_000;

/// Truncation leakage above which results are rejected.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("discretization needs κ > -1 for finite mode weights, got κ = {kappa}")]
    UnsupportedRegime { kappa: f64 },
    #[error("invalid bath: {0}")]
    InvalidBath(String),
    #[error("full dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("truncation leakage {leakage:e} exceeds {limit:e}")]
    TruncationLeak { leakage: f64, limit: f64 },
    #[error("amplitudes must satisfy |α₊|² + |α₋|² = 1, got {0}")]
    InvalidAmplitudes(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid qubit state: {0}")]
    InvalidQubitState(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// One bosonic mode: frequency and complex coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub g: Complex64,
}

/// Finite set of modes with strictly increasing positive frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    modes: Vec<Mode>,
}

impl DiscretizedBath {
    pub fn new(modes: Vec<Mode>) -> Result<Self, FockError> {
        if modes.is_empty() {
            return Err(FockError::InvalidBath("no modes".into()));
        }
        if modes
            .iter()
            .any(|m| !(m.omega > 0.0) || !m.omega.is_finite() || !m.g.norm().is_finite())
        {
            return Err(FockError::InvalidBath(
                "frequencies must be finite and > 0".into(),
            ));
        }
        if !modes.windows(2).all(|w| w[0].omega < w[1].omega) {
            return Err(FockError::InvalidBath(
                "frequencies must be strictly increasing".into(),
            ));
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `Σ_j |g_j|²`, the discrete `‖g‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.modes.iter().map(|m| m.g.norm_sqr()).sum()
    }

    /// `Σ_j ω_j |g_j|²`, the discrete cloud energy.
    pub fn cloud_energy(&self) -> f64 {
        self.modes.iter().map(|m| m.omega * m.g.norm_sqr()).sum()
    }

    /// `2 Σ_j |g_j|² |1 - e^{-iω_j t}|²`.
    pub fn discrete_gamma(&self, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let s = (0.5 * m.omega * t).sin();
                8.0 * m.g.norm_sqr() * s * s
            })
            .sum()
    }

    /// Smallest occupation cutoff such that `max_j |g_j|² <= n_max/25` and the
    /// furthest-displaced coherent state (`|β| = 2|g_j|`) puts less than
    /// `LEAKAGE_LIMIT·1e-4` on `n >= n_max`.
    ///
    /// The margin is wide because truncation also shifts the block spectra,
    /// and the resulting phase error grows with `ω t`: `γ_t` errors of a few
    /// hundred times the measured edge occupation are typical over tens of
    /// periods.
    pub fn recommended_n_max(&self) -> usize {
        let gmax2 = self
            .modes
            .iter()
            .map(|m| m.g.norm_sqr())
            .fold(0.0, f64::max);
        let mut n = ((25.0 * gmax2).ceil() as usize).max(1);
        while poisson_tail_above(4.0 * gmax2, n - 1) > 1e-4 * LEAKAGE_LIMIT {
            n += 1;
        }
        n
    }
}

/// `Σ_{n > n_max} e^{-μ} μⁿ/n!`.
fn poisson_tail_above(mu: f64, n_max: usize) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    // log-space start to stay finite for large n_max
    let mut n = n_max + 1;
    let ln_term = -mu + n as f64 * mu.ln() - libm::lgamma(n as f64 + 1.0);
    let mut term = ln_term.exp();
    let mut sum = 0.0;
    loop {
        sum += term;
        n += 1;
        term *= mu / n as f64;
        if (n as f64 > mu && term < 1e-18 * sum) || term == 0.0 {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscretizationScheme {
    MidpointUniform,
    GaussNodes,
}

/// Finite-mode stand-in for a continuum form factor.
///
/// Nodes lie in `(0, ω_end]` with `ω_end = ω_c` for a hard cutoff.
/// `MidpointUniform` puts one mode at each bin centre carrying the bin's
/// weight `∫|g|²` (for `κ > 0`) or `∫ω|g|²/ω_j` (otherwise, which keeps the
/// cloud energy exact). `GaussNodes` uses Gauss-Legendre nodes and weights.
pub fn discretize(
    ff: &FormFactor,
    k: usize,
    scheme: DiscretizationScheme,
) -> Result<DiscretizedBath, FockError> {
    if k == 0 {
        return Err(FockError::InvalidArgument("mode count must be >= 1".into()));
    }
    if ff.kappa <= -1.0 {
        return Err(FockError::UnsupportedRegime { kappa: ff.kappa });
    }
    let end = ff.support_end();
    let modes = match scheme {
        DiscretizationScheme::MidpointUniform => {
            let h = end / k as f64;
            (0..k)
                .map(|j| {
                    let lo = j as f64 * h;
                    let hi = if j + 1 == k { end } else { (j + 1) as f64 * h };
                    let omega = 0.5 * (lo + hi);
                    let weight = if ff.kappa > 0.0 {
                        bin_integral(|w| ff.coupling_sq(w), lo, hi, ff.kappa - 1.0)?
                    } else {
                        bin_integral(|w| w * ff.coupling_sq(w), lo, hi, ff.kappa)? / omega
                    };
                    Ok(Mode {
                        omega,
                        g: Complex64::new(weight.max(0.0).sqrt(), 0.0),
                    })
                })
                .collect::<Result<Vec<_>, FockError>>()?
        }
        DiscretizationScheme::GaussNodes => {
            let (x, w) = gauss_legendre(k);
            x.iter()
                .zip(&w)
                .map(|(&x, &w)| {
                    let omega = 0.5 * end * (x + 1.0);
                    let weight = 0.5 * end * w * ff.coupling_sq(omega);
                    Mode {
                        omega,
                        g: Complex64::new(weight.sqrt(), 0.0),
                    }
                })
                .collect()
        }
    };
    DiscretizedBath::new(modes)
}

fn bin_integral<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    exponent_at_zero: f64,
) -> Result<f64, FockError> {
    let mut spec = IntegrandSpec::new(f, lo, hi);
    if lo == 0.0 {
        spec = spec.endpoint_exponent(exponent_at_zero);
    }
    Ok(quad::integrate(&spec, 1e-12)?.value)
}

/// Which `σ₃` branch a bath block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Occupation-truncated Fock space over a discretized bath.
///
/// Basis index `Σ_j n_j (n_max+1)^j`; index 0 is the vacuum.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFockSpace {
    bath: DiscretizedBath,
    n_max: usize,
    bath_dim: usize,
}

impl TruncatedFockSpace {
    pub fn new(bath: DiscretizedBath, n_max: usize) -> Result<Self, FockError> {
        if n_max < 1 {
            return Err(FockError::InvalidArgument("n_max must be >= 1".into()));
        }
        let per_mode = n_max + 1;
        let mut bath_dim: usize = 1;
        for _ in 0..bath.len() {
            bath_dim = bath_dim
                .checked_mul(per_mode)
                .filter(|d| 2 * d <= DIMENSION_CAP)
                .ok_or(FockError::DimensionCap {
                    dim: usize::MAX,
                    cap: DIMENSION_CAP,
                })?;
        }
        Ok(Self {
            bath,
            n_max,
            bath_dim,
        })
    }

    pub fn bath(&self) -> &DiscretizedBath {
        &self.bath
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn bath_dim(&self) -> usize {
        self.bath_dim
    }

    /// Spin ⊗ bath dimension.
    pub fn dim(&self) -> usize {
        2 * self.bath_dim
    }

    fn stride(&self, mode: usize) -> usize {
        (self.n_max + 1).pow(mode as u32)
    }

    fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % (self.n_max + 1)
    }

    pub fn vacuum(&self) -> DVector<Complex64> {
        let mut v = DVector::zeros(self.bath_dim);
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// Largest per-mode probability of occupying `n = n_max` in `state`.
    pub fn edge_occupation(&self, state: &DVector<Complex64>) -> f64 {
        let mut per_mode = vec![0.0; self.bath.len()];
        for (idx, amp) in state.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for (j, slot) in per_mode.iter_mut().enumerate() {
                if self.occupation(idx, j) == self.n_max {
                    *slot += p;
                }
            }
        }
        per_mode.into_iter().fold(0.0, f64::max)
    }
}

/// `H₊` or `H₋` on the truncated bath.
pub fn build_block(
    space: &TruncatedFockSpace,
    branch: Branch,
) -> Result<HermitianMatrix, FockError> {
    let n = space.bath_dim;
    let sign = branch.sign();
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for idx in 0..n {
        let mut diag = 0.0;
        for (j, m) in space.bath.modes.iter().enumerate() {
            let nj = space.occupation(idx, j);
            diag += m.omega * nj as f64;
            if nj < space.n_max {
                let up = idx + space.stride(j);
                let amp = sign * m.omega * ((nj + 1) as f64).sqrt();
                // ⟨n+1| a† |n⟩ = √(n+1)
                h[(up, idx)] += m.g * amp;
                h[(idx, up)] += m.g.conj() * amp;
            }
        }
        h[(idx, idx)] += Complex64::new(diag, 0.0);
    }
    Ok(HermitianMatrix::new(h)?)
}

/// `H_± v` without forming the block; same matrix elements as [`build_block`].
pub fn apply_block(
    space: &TruncatedFockSpace,
    branch: Branch,
    v: &DVector<Complex64>,
) -> Result<DVector<Complex64>, FockError> {
    let n = space.bath_dim;
    if v.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: v.len(),
        }
        .into());
    }
    let sign = branch.sign();
    let mut out = DVector::<Complex64>::zeros(n);
    for idx in 0..n {
        let mut diag = 0.0;
        for (j, m) in space.bath.modes.iter().enumerate() {
            let nj = space.occupation(idx, j);
            diag += m.omega * nj as f64;
            if nj < space.n_max {
                let up = idx + space.stride(j);
                let amp = sign * m.omega * ((nj + 1) as f64).sqrt();
                out[up] += m.g * amp * v[idx];
                out[idx] += m.g.conj() * amp * v[up];
            }
        }
        out[idx] += v[idx] * diag;
    }
    Ok(out)
}

/// Lowest eigenvalue of `H_±`, matrix-free, so it scales to bath spaces too
/// large for a dense eigensolve.
pub fn block_ground_energy(
    space: &TruncatedFockSpace,
    branch: Branch,
    tol: f64,
) -> Result<f64, FockError> {
    // The vacuum overlaps the displaced ground state with weight e^{-‖g‖²}.
    let start = space.vacuum();
    let mut failure = None;
    let e = crate::linalg::lowest_eigenvalue(
        |v| match apply_block(space, branch, v) {
            Ok(w) => w,
            Err(e) => {
                failure.get_or_insert(e);
                DVector::zeros(v.len())
            }
        },
        &start,
        tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(e?)
}

/// Full `diag[H₊, H₋]` on spin ⊗ bath, `ψ₊` block first.
pub fn build_hamiltonian(space: &TruncatedFockSpace) -> Result<HermitianMatrix, FockError> {
    let n = space.bath_dim;
    let hp = build_block(space, Branch::Plus)?;
    let hm = build_block(space, Branch::Minus)?;
    let mut full = DMatrix::<Complex64>::zeros(2 * n, 2 * n);
    full.view_mut((0, 0), (n, n)).copy_from(hp.matrix());
    full.view_mut((n, n), (n, n)).copy_from(hm.matrix());
    Ok(HermitianMatrix::new(full)?)
}

/// Truncated, renormalized coherent state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentState {
    pub vector: DVector<Complex64>,
    /// Norm deficit `1 - ‖ψ‖²` before renormalization.
    pub leakage: f64,
}

/// Per-mode coefficients `e^{-|α|²/2} αⁿ/√n!` for `n <= n_max`, plus the
/// probability mass beyond `n_max`.
fn single_mode_coherent(alpha: Complex64, n_max: usize) -> (Vec<Complex64>, f64) {
    let mut c = Vec::with_capacity(n_max + 1);
    let mut term = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..=n_max {
        c.push(term);
        term = term * alpha / ((n + 1) as f64).sqrt();
    }
    (c, poisson_tail_above(alpha.norm_sqr(), n_max))
}

/// Tensor product of per-mode truncated coherent states with displacements
/// `alphas`, each renormalized after truncation.
pub fn coherent_vector(
    space: &TruncatedFockSpace,
    alphas: &[Complex64],
) -> Result<CoherentState, FockError> {
    let state = coherent_vector_unchecked(space, alphas)?;
    if state.leakage > LEAKAGE_LIMIT {
        return Err(FockError::TruncationLeak {
            leakage: state.leakage,
            limit: LEAKAGE_LIMIT,
        });
    }
    Ok(state)
}

/// As [`coherent_vector`] but reports leakage instead of rejecting it.
pub fn coherent_vector_unchecked(
    space: &TruncatedFockSpace,
    alphas: &[Complex64],
) -> Result<CoherentState, FockError> {
    if alphas.len() != space.bath.len() {
        return Err(FockError::InvalidArgument(format!(
            "expected {} displacements, got {}",
            space.bath.len(),
            alphas.len()
        )));
    }
    let mut kept = 1.0;
    let mut vec: Vec<Complex64> = vec![Complex64::new(1.0, 0.0)];
    // Mode 0 is the fastest-varying index.
    for &alpha in alphas {
        let (mut c, tail) = single_mode_coherent(alpha, space.n_max);
        kept *= 1.0 - tail;
        let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in c.iter_mut() {
            *z /= norm;
        }
        let mut next = Vec::with_capacity(vec.len() * c.len());
        for cz in &c {
            for v in &vec {
                next.push(v * cz);
            }
        }
        vec = next;
    }
    // Reorder: the loop above builds index = Σ n_j stride_j with the latest mode
    // as the slowest index, matching the basis convention.
    Ok(CoherentState {
        vector: DVector::from_vec(vec),
        leakage: 1.0 - kept,
    })
}

/// Numeric and closed-form coherent-state overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapCheck {
    /// `|⟨coh(f), coh(h)⟩|²` on the truncated space.
    pub numeric: f64,
    /// `e^{-‖f-h‖²}`.
    pub closed_form: f64,
    /// `e^{-(‖f‖-‖h‖)²}`.
    pub bound: f64,
    pub leakage: f64,
}

pub fn overlap_check(
    space: &TruncatedFockSpace,
    f: &[Complex64],
    h: &[Complex64],
) -> Result<OverlapCheck, FockError> {
    let cf = coherent_vector(space, f)?;
    let ch = coherent_vector(space, h)?;
    let numeric = cf.vector.dotc(&ch.vector).norm_sqr();
    let dist2: f64 = f.iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).sum();
    let nf = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nh = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(OverlapCheck {
        numeric,
        closed_form: (-dist2).exp(),
        bound: (-(nf - nh).powi(2)).exp(),
        leakage: cf.leakage.max(ch.leakage),
    })
}

/// Single-mode displacement `exp(α a† - ᾱ a)` on `{|0⟩..|n_max⟩}`, built by
/// exponentiating the truncated generator.
pub fn displacement_operator(
    n_max: usize,
    alpha: Complex64,
) -> Result<DMatrix<Complex64>, FockError> {
    let n = n_max + 1;
    // G = i(α a† - ᾱ a) is Hermitian and exp(-iG) = exp(α a† - ᾱ a).
    let mut g = DMatrix::<Complex64>::zeros(n, n);
    let i = Complex64::new(0.0, 1.0);
    for k in 0..n_max {
        let s = ((k + 1) as f64).sqrt();
        g[(k + 1, k)] += i * alpha * s;
        g[(k, k + 1)] += -i * alpha.conj() * s;
    }
    let eig = HermitianMatrix::new(g)?.eig()?;
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        eig.eigenvalues
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e)),
    ));
    Ok(&eig.eigenvectors * phases * eig.eigenvectors.adjoint())
}

/// Reduced two-level density matrix, `ψ₊` first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState(pub Matrix2<Complex64>);

impl QubitState {
    pub fn new(rho: Matrix2<Complex64>) -> Result<Self, FockError> {
        if (rho - rho.adjoint()).norm() > 1e-10 {
            return Err(FockError::InvalidQubitState("not Hermitian".into()));
        }
        let tr = (rho[(0, 0)] + rho[(1, 1)]).re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(FockError::InvalidQubitState(format!("trace {tr}")));
        }
        let (a, d) = (rho[(0, 0)].re, rho[(1, 1)].re);
        let b = rho[(0, 1)].norm();
        let disc = (0.25 * (a - d).powi(2) + b * b).sqrt();
        let lowest = 0.5 * (a + d) - disc;
        if lowest < -1e-10 {
            return Err(FockError::InvalidQubitState(format!("eigenvalue {lowest}")));
        }
        Ok(Self(rho))
    }

    /// Pure state `|ψ⟩⟨ψ|` with `ψ = α₊ψ₊ + α₋ψ₋`.
    pub fn pure(alpha_plus: Complex64, alpha_minus: Complex64) -> Result<Self, FockError> {
        let v = nalgebra::Vector2::new(alpha_plus, alpha_minus);
        Self::new(v * v.adjoint())
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    pub fn populations(&self) -> (f64, f64) {
        (self.0[(0, 0)].re, self.0[(1, 1)].re)
    }

    /// `ρ₊₋`.
    pub fn coherence(&self) -> Complex64 {
        self.0[(0, 1)]
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }
}

/// Result of an exact propagation on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    /// `γ_t = -ln|⟨φ₋(t)|φ₊(t)⟩|`, method [`Method::FockOracle`].
    pub curve: DecoherenceCurve,
    /// `2 Σ_j |g_j|² |1 - e^{-iω_j t}|²` on the same grid.
    pub closed_form_gamma: Vec<f64>,
    pub states: Vec<QubitState>,
    /// `⟨Ψ(t)|H|Ψ(t)⟩`.
    pub energies: Vec<f64>,
    /// Per-time largest `n = n_max` occupation over modes and branches.
    pub leakage: Vec<f64>,
    pub max_leakage: f64,
}

impl OracleRun {
    /// Largest `|γ_oracle - γ_closed|` relative to `max(1, γ_closed)`.
    pub fn max_gamma_deviation(&self) -> f64 {
        self.curve
            .gamma
            .iter()
            .zip(&self.closed_form_gamma)
            .map(|(o, c)| (o - c).abs() / c.max(1.0))
            .fold(0.0, f64::max)
    }

    /// Largest relative deviation of `|ρ₊₋|/|α₊α₋|` from `e^{-γ_closed}`.
    pub fn max_coherence_deviation(&self) -> f64 {
        self.curve
            .coherence
            .iter()
            .zip(&self.closed_form_gamma)
            .map(|(o, c)| {
                let exact = (-c).exp();
                (o - exact).abs() / exact
            })
            .fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        self.energies
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// Spin-boson Hamiltonian on a truncated space with both blocks diagonalized once.
#[derive(Debug, Clone)]
pub struct SpinBosonOracle {
    space: TruncatedFockSpace,
    h_plus: HermitianMatrix,
    h_minus: HermitianMatrix,
    eig_plus: EigenPair,
    eig_minus: EigenPair,
}

impl SpinBosonOracle {
    pub fn new(space: TruncatedFockSpace) -> Result<Self, FockError> {
        let h_plus = build_block(&space, Branch::Plus)?;
        let h_minus = build_block(&space, Branch::Minus)?;
        let eig_plus = h_plus.eig()?;
        let eig_minus = h_minus.eig()?;
        Ok(Self {
            space,
            h_plus,
            h_minus,
            eig_plus,
            eig_minus,
        })
    }

    pub fn space(&self) -> &TruncatedFockSpace {
        &self.space
    }

    pub fn block(&self, branch: Branch) -> &HermitianMatrix {
        match branch {
            Branch::Plus => &self.h_plus,
            Branch::Minus => &self.h_minus,
        }
    }

    /// Lowest eigenvalue of `H₊` (equal to that of `H₋`).
    pub fn ground_energy(&self) -> f64 {
        self.eig_plus.eigenvalues[0]
    }

    /// `(α₊ψ₊ + α₋ψ₋) ⊗ Ω` in the full space.
    pub fn initial_state(
        &self,
        alpha_plus: Complex64,
        alpha_minus: Complex64,
    ) -> DVector<Complex64> {
        let n = self.space.bath_dim;
        let mut v = DVector::zeros(2 * n);
        v[0] = alpha_plus;
        v[n] = alpha_minus;
        v
    }

    /// `⟨Ψ|H|Ψ⟩` for a full spin ⊗ bath state.
    pub fn energy_expectation(&self, state: &DVector<Complex64>) -> Result<f64, FockError> {
        let n = self.space.bath_dim;
        if state.len() != 2 * n {
            return Err(LinalgError::DimensionMismatch {
                expected: 2 * n,
                got: state.len(),
            }
            .into());
        }
        let plus = state.rows(0, n).into_owned();
        let minus = state.rows(n, n).into_owned();
        Ok(self.h_plus.expectation(&plus)? + self.h_minus.expectation(&minus)?)
    }

    /// Evolves `(α₊ψ₊ + α₋ψ₋) ⊗ Ω` and traces out the bath on `t_grid`.
    pub fn propagate_and_reduce(
        &self,
        alpha_plus: Complex64,
        alpha_minus: Complex64,
        t_grid: &[f64],
    ) -> Result<OracleRun, FockError> {
        let norm = alpha_plus.norm_sqr() + alpha_minus.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(FockError::InvalidAmplitudes(norm));
        }
        let vac = self.space.vacuum();
        let c_plus = self.eig_plus.to_eigenbasis(&vac)?;
        let c_minus = self.eig_minus.to_eigenbasis(&vac)?;
        let n = self.space.bath_dim;

        let mut gamma = Vec::with_capacity(t_grid.len());
        let mut states = Vec::with_capacity(t_grid.len());
        let mut energies = Vec::with_capacity(t_grid.len());
        let mut leakage = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let phi_p = self.eig_plus.evolve_coefficients(t, &c_plus);
            let phi_m = self.eig_minus.evolve_coefficients(t, &c_minus);
            leakage.push(
                self.space
                    .edge_occupation(&phi_p)
                    .max(self.space.edge_occupation(&phi_m)),
            );
            let overlap = phi_m.dotc(&phi_p);
            gamma.push(-overlap.norm().ln());
            let rho = Matrix2::new(
                alpha_plus * alpha_plus.conj() * phi_p.norm_squared(),
                alpha_plus * alpha_minus.conj() * overlap,
                alpha_minus * alpha_plus.conj() * overlap.conj(),
                alpha_minus * alpha_minus.conj() * phi_m.norm_squared(),
            );
            states.push(QubitState::new(rho)?);
            let mut full = DVector::zeros(2 * n);
            full.rows_mut(0, n).copy_from(&(phi_p * alpha_plus));
            full.rows_mut(n, n).copy_from(&(phi_m * alpha_minus));
            energies.push(self.energy_expectation(&full)?);
        }
        let max_leakage = leakage.iter().copied().fold(0.0, f64::max);
        if max_leakage > LEAKAGE_LIMIT {
            return Err(FockError::TruncationLeak {
                leakage: max_leakage,
                limit: LEAKAGE_LIMIT,
            });
        }
        // Round-off can leave -ln|⟨φ₋|φ₊⟩| at -1e-16 near t = 0.
        let gamma: Vec<f64> = gamma.into_iter().map(|g| g.max(0.0)).collect();
        let closed_form_gamma = t_grid
            .iter()
            .map(|&t| self.space.bath.discrete_gamma(t))
            .collect();
        Ok(OracleRun {
            curve: DecoherenceCurve::from_gamma(t_grid.to_vec(), gamma, Method::FockOracle, 0.0)?,
            closed_form_gamma,
            states,
            energies,
            leakage,
            max_leakage,
        })
    }
}

/// Convenience wrapper building a [`SpinBosonOracle`] for a single run.
pub fn propagate_and_reduce(
    space: &TruncatedFockSpace,
    alpha_plus: Complex64,
    alpha_minus: Complex64,
    t_grid: &[f64],
) -> Result<OracleRun, FockError> {
    SpinBosonOracle::new(space.clone())?.propagate_and_reduce(alpha_plus, alpha_minus, t_grid)
}

/// `⟨Ψ|H|Ψ⟩` for a full spin ⊗ bath state.
pub fn energy_expectation(
    space: &TruncatedFockSpace,
    state: &DVector<Complex64>,
) -> Result<f64, FockError> {
    SpinBosonOracle::new(space.clone())?.energy_expectation(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{cloud_energy, norm_sq};
    use proptest::prelude::*;

    fn cr(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn single(omega: f64, g: f64, n_max: usize) -> TruncatedFockSpace {
        let bath = DiscretizedBath::new(vec![Mode { omega, g: cr(g) }]).unwrap();
        TruncatedFockSpace::new(bath, n_max).unwrap()
    }

    #[test]
    fn bath_validation() {
        assert!(DiscretizedBath::new(vec![]).is_err());
        assert!(DiscretizedBath::new(vec![Mode {
            omega: 0.0,
            g: cr(1.0)
        }])
        .is_err());
        let m = Mode {
            omega: 1.0,
            g: cr(0.1),
        };
        assert!(DiscretizedBath::new(vec![m, m]).is_err());
    }

    #[test]
    fn discretize_single_mode_is_one_panel() {
        let ff = FormFactor::hard(2.0, 1.0, 1.0).unwrap();
        for scheme in [
            DiscretizationScheme::MidpointUniform,
            DiscretizationScheme::GaussNodes,
        ] {
            let b = discretize(&ff, 1, scheme).unwrap();
            assert_eq!(b.len(), 1);
            assert!((b.norm_sq() - norm_sq(&ff).finite().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_converges_to_continuum() {
        let ff = FormFactor::hard(1.0, 1.0, 1.0).unwrap();
        let b = discretize(&ff, 64, DiscretizationScheme::MidpointUniform).unwrap();
        assert!((b.norm_sq() - 1.0).abs() <= 1e-3);
        let ohmic = FormFactor::hard(0.0, 1.0, 1.0).unwrap();
        for scheme in [
            DiscretizationScheme::MidpointUniform,
            DiscretizationScheme::GaussNodes,
        ] {
            let b = discretize(&ohmic, 64, scheme).unwrap();
            assert!((b.cloud_energy() - cloud_energy(&ohmic).finite().unwrap()).abs() <= 1e-2);
            assert!(b.modes().iter().all(|m| m.omega > 0.0 && m.omega <= 1.0));
        }
        // ‖g‖² diverges for κ = 0: the discrete sum keeps growing with K.
        let small = discretize(&ohmic, 16, DiscretizationScheme::GaussNodes)
            .unwrap()
            .norm_sq();
        let large = discretize(&ohmic, 256, DiscretizationScheme::GaussNodes)
            .unwrap()
            .norm_sq();
        assert!(large > small + 1.0);
        assert!(matches!(
            discretize(
                &FormFactor::hard(-1.0, 1.0, 1.0).unwrap(),
                4,
                DiscretizationScheme::GaussNodes
            ),
            Err(FockError::UnsupportedRegime { .. })
        ));
    }

    #[test]
    fn two_level_truncation_matrix() {
        let g = 0.3;
        let h = build_block(&single(1.0, g, 1), Branch::Plus).unwrap();
        let m = h.matrix();
        assert_eq!(m[(0, 0)], cr(0.0));
        assert_eq!(m[(0, 1)], cr(g));
        assert_eq!(m[(1, 0)], cr(g));
        assert_eq!(m[(1, 1)], cr(1.0));
        let hm = build_block(&single(1.0, g, 1), Branch::Minus).unwrap();
        assert_eq!(hm.matrix()[(0, 1)], cr(-g));
    }

    #[test]
    fn matrix_free_block_matches_dense() {
        let bath = DiscretizedBath::new(vec![
            Mode {
                omega: 0.4,
                g: Complex64::new(0.2, 0.1),
            },
            Mode {
                omega: 1.1,
                g: cr(-0.15),
            },
        ])
        .unwrap();
        let space = TruncatedFockSpace::new(bath, 5).unwrap();
        let v = DVector::from_fn(space.bath_dim(), |i, _| {
            Complex64::new((i as f64).sin(), (0.3 * i as f64).cos())
        });
        for branch in [Branch::Plus, Branch::Minus] {
            let dense = build_block(&space, branch).unwrap();
            let diff = (dense.matrix() * &v - apply_block(&space, branch, &v).unwrap()).norm();
            assert!(diff < 1e-14);
            let e = block_ground_energy(&space, branch, 1e-12).unwrap();
            assert!((e - dense.eigenvalues().unwrap()[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn hamiltonian_is_block_diagonal() {
        let bath = DiscretizedBath::new(vec![
            Mode {
                omega: 0.4,
                g: Complex64::new(0.1, 0.2),
            },
            Mode {
                omega: 0.9,
                g: Complex64::new(-0.3, 0.05),
            },
        ])
        .unwrap();
        let space = TruncatedFockSpace::new(bath, 3).unwrap();
        let h = build_hamiltonian(&space).unwrap();
        let n = space.bath_dim();
        assert_eq!(h.dim(), 2 * n);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(h.matrix()[(i, n + j)], cr(0.0));
                assert_eq!(h.matrix()[(n + i, j)], cr(0.0));
            }
        }
    }

    #[test]
    fn dimension_cap_enforced() {
        let modes = (1..=6)
            .map(|j| Mode {
                omega: j as f64,
                g: cr(0.1),
            })
            .collect();
        let bath = DiscretizedBath::new(modes).unwrap();
        assert!(matches!(
            TruncatedFockSpace::new(bath, 9),
            Err(FockError::DimensionCap { .. })
        ));
    }

    #[test]
    fn coherent_vector_basics() {
        let space = single(1.0, 0.1, 20);
        let vac = coherent_vector(&space, &[cr(0.0)]).unwrap();
        assert_eq!(vac.vector, space.vacuum());
        let c = coherent_vector(&space, &[cr(0.5)]).unwrap();
        assert!((c.vector[1] - cr((-0.125f64).exp() * 0.5)).norm() < 1e-9);
        assert!((c.vector.norm() - 1.0).abs() < 1e-15);
        let tiny = single(1.0, 0.1, 2);
        assert!(matches!(
            coherent_vector(&tiny, &[cr(1.0)]),
            Err(FockError::TruncationLeak { .. })
        ));
        assert!(
            coherent_vector_unchecked(&tiny, &[cr(1.0)])
                .unwrap()
                .leakage
                > 1e-3
        );
    }

    #[test]
    fn overlap_closed_form_single_mode() {
        let space = single(1.0, 0.1, 40);
        let r = overlap_check(&space, &[cr(0.3)], &[cr(-0.3)]).unwrap();
        assert!((r.closed_form - 0.697_676_326_071_031).abs() < 1e-12);
        assert!((r.numeric - r.closed_form).abs() < 1e-6);
        let same = overlap_check(&space, &[cr(0.3)], &[cr(0.3)]).unwrap();
        assert!((same.numeric - 1.0).abs() < 1e-14);
        assert_eq!(same.closed_form, 1.0);
    }

    #[test]
    fn multimode_coherent_ordering_matches_basis() {
        let bath = DiscretizedBath::new(vec![
            Mode {
                omega: 1.0,
                g: cr(0.1),
            },
            Mode {
                omega: 2.0,
                g: cr(0.1),
            },
        ])
        .unwrap();
        let space = TruncatedFockSpace::new(bath, 8).unwrap();
        let c = coherent_vector(&space, &[cr(0.5), cr(0.0)]).unwrap();
        // |n₀=1, n₁=0⟩ has index 1; |n₀=0, n₁=1⟩ has index 9.
        assert!(c.vector[1].norm() > 0.1);
        assert_eq!(c.vector[9], cr(0.0));
    }

    #[test]
    fn weyl_relation_on_truncated_mode() {
        let n_max = 60;
        let f = Complex64::new(0.4, -0.2);
        let h = Complex64::new(-0.1, 0.5);
        let wf = displacement_operator(n_max, f).unwrap();
        let wh = displacement_operator(n_max, h).unwrap();
        let wfh = displacement_operator(n_max, f + h).unwrap();
        let mut vac = DVector::zeros(n_max + 1);
        vac[0] = cr(1.0);
        let lhs = &wf * (&wh * &vac);
        // ⟨f, h⟩ = f̄ h
        let phase = Complex64::from_polar(1.0, -(f.conj() * h).im);
        let rhs = (&wfh * &vac) * phase;
        assert!((lhs - rhs).norm() < 1e-10);
        // W(f)Ω is the coherent state with displacement f.
        let space = single(1.0, 0.1, n_max);
        let coh = coherent_vector(&space, &[f]).unwrap();
        assert!((&wf * &vac - coh.vector).norm() < 1e-10);
    }

    #[test]
    fn ground_energy_weak_coupling() {
        let space = single(0.7, 0.05, 12);
        let oracle = SpinBosonOracle::new(space.clone()).unwrap();
        let expected = -space.bath().cloud_energy();
        assert!((oracle.ground_energy() - expected).abs() < 1e-10);
    }

    #[test]
    fn propagation_basics() {
        let bath = DiscretizedBath::new(vec![
            Mode {
                omega: 0.5,
                g: cr(0.2),
            },
            Mode {
                omega: 1.1,
                g: Complex64::new(0.1, 0.15),
            },
        ])
        .unwrap();
        let n_max = bath.recommended_n_max().max(14);
        let space = TruncatedFockSpace::new(bath, n_max).unwrap();
        let oracle = SpinBosonOracle::new(space).unwrap();
        let ap = Complex64::new(0.6, 0.0);
        let am = Complex64::new(0.0, 0.8);
        let grid = quad::linspace(0.0, 30.0, 31);
        let run = oracle.propagate_and_reduce(ap, am, &grid).unwrap();
        let rho0 = QubitState::pure(ap, am).unwrap();
        assert!((run.states[0].matrix() - rho0.matrix()).norm() < 1e-14);
        assert_eq!(run.curve.gamma[0], 0.0);
        for (s, g) in run.states.iter().zip(&run.closed_form_gamma) {
            let (pp, pm) = s.populations();
            assert!((pp - 0.36).abs() < 1e-10 && (pm - 0.64).abs() < 1e-10);
            let purity = 1.0 - 2.0 * 0.36 * 0.64 * (1.0 - (-2.0 * g).exp());
            assert!((s.purity() - purity).abs() < 1e-8);
        }
        assert!(run.max_gamma_deviation() < 1e-6);
        assert!(run.max_energy_drift() < 1e-9);
        assert!(run.energies[0].abs() < 1e-12);
        assert!(matches!(
            oracle.propagate_and_reduce(cr(1.0), cr(1.0), &grid),
            Err(FockError::InvalidAmplitudes(_))
        ));
    }

    #[test]
    fn propagation_detects_leakage() {
        let space = single(1.0, 0.8, 3);
        let err = propagate_and_reduce(&space, cr(1.0), cr(0.0), &[0.0, 3.0]).unwrap_err();
        assert!(matches!(err, FockError::TruncationLeak { .. }));
    }

    #[test]
    fn energy_of_eigenvector_is_eigenvalue() {
        let space = single(1.0, 0.2, 10);
        let oracle = SpinBosonOracle::new(space.clone()).unwrap();
        let eig = oracle.block(Branch::Plus).eig().unwrap();
        let n = space.bath_dim();
        let mut full = DVector::zeros(2 * n);
        full.rows_mut(0, n).copy_from(&eig.eigenvectors.column(3));
        assert!((oracle.energy_expectation(&full).unwrap() - eig.eigenvalues[3]).abs() < 1e-12);
        let init = oracle.initial_state(cr(0.6), cr(0.8));
        assert!(energy_expectation(&space, &init).unwrap().abs() < 1e-14);
    }

    #[test]
    fn qubit_state_validation() {
        let bad = Matrix2::new(cr(0.5), cr(0.0), cr(0.0), cr(0.6));
        assert!(QubitState::new(bad).is_err());
        let neg = Matrix2::new(cr(0.5), cr(0.9), cr(0.9), cr(0.5));
        assert!(QubitState::new(neg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn overlap_respects_bound(fr in -0.8f64..0.8, fi in -0.8f64..0.8, hr in -0.8f64..0.8, hi in -0.8f64..0.8) {
            let space = single(1.0, 0.1, 30);
            let r = overlap_check(&space, &[Complex64::new(fr, fi)], &[Complex64::new(hr, hi)]).unwrap();
            prop_assert!(r.numeric <= r.bound + 1e-9);
            prop_assert!((r.numeric - r.closed_form).abs() < 1e-6);
        }
    }
}
