//! Finite-`N` mean-field dephasing.
//!
//! The bath is `N` independent `M`-level subsystems `(h_k, Q_k)`, each coupled
//! to the qubit through `±Q_k/√N`. With no tunnelling the qubit coherence is
//! multiplied by
//!
//! ```text
//! Γ_N(t) = Π_k (1/M) Tr[e^{i h₋ t} e^{-i h₊ t}],   h_± = h_k ± Q_k/√N
//! ```
//!
//! starting from the maximally mixed bath state.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{EigenPair, HermitianMatrix, LinalgError};
use crate::rmt::{self, CouplingMatrix, EnsembleKind, LevelEnsemble, RmtError};
use crate::seed::{rng_for, stream_id, StreamTag};

pub const MAX_LEVELS: usize = 512;
pub const MAX_SUBSYSTEMS: usize = 64;

/// Largest bath dimension `M^N` accepted by the full-space oracle.
pub const ORACLE_MAX_BATH_DIM: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeanFieldError {
    #[error("dimension cap exceeded: {0}")]
    DimensionCap(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One `M`-level subsystem: its levels and its coupling in the level basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub levels: Vec<f64>,
    pub coupling: CouplingMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldBath {
    subsystems: Vec<Subsystem>,
    identical_copies: bool,
}

impl MeanFieldBath {
    pub fn new(subsystems: Vec<Subsystem>, identical_copies: bool) -> Result<Self, MeanFieldError> {
        let n = subsystems.len();
        if n == 0 {
            return Err(MeanFieldError::InvalidArgument(
                "need at least one subsystem".into(),
            ));
        }
        if n > MAX_SUBSYSTEMS {
            return Err(MeanFieldError::DimensionCap(format!(
                "N = {n} > {MAX_SUBSYSTEMS}"
            )));
        }
        let m = subsystems[0].levels.len();
        if m > MAX_LEVELS {
            return Err(MeanFieldError::DimensionCap(format!(
                "M = {m} > {MAX_LEVELS}"
            )));
        }
        if subsystems
            .iter()
            .any(|s| s.levels.len() != m || s.coupling.dim() != m)
        {
            return Err(MeanFieldError::InvalidArgument(
                "all subsystems must have the same M".into(),
            ));
        }
        if identical_copies && subsystems.iter().any(|s| s != &subsystems[0]) {
            return Err(MeanFieldError::InvalidArgument(
                "identical_copies set but subsystems differ".into(),
            ));
        }
        Ok(Self {
            subsystems,
            identical_copies,
        })
    }

    /// Draws realization `realization`: subsystem `k` gets levels and coupling
    /// from their own sub-streams, so two ensembles sampled with the same seed
    /// share their couplings. With `identical_copies` every subsystem reuses
    /// subsystem 0.
    pub fn sample(
        ensemble: &LevelEnsemble,
        qbar2: f64,
        n: usize,
        seed: u64,
        realization: u64,
        identical_copies: bool,
    ) -> Result<Self, MeanFieldError> {
        if n == 0 || n > MAX_SUBSYSTEMS {
            return Err(MeanFieldError::DimensionCap(format!(
                "N = {n} must be in 1..={MAX_SUBSYSTEMS}"
            )));
        }
        if ensemble.m > MAX_LEVELS {
            return Err(MeanFieldError::DimensionCap(format!(
                "M = {} > {MAX_LEVELS}",
                ensemble.m
            )));
        }
        if !(qbar2 >= 0.0 && qbar2.is_finite()) {
            return Err(MeanFieldError::InvalidArgument(
                "q̄² must be finite and >= 0".into(),
            ));
        }
        let draws = if identical_copies { 1 } else { n };
        let mut subsystems = Vec::with_capacity(n);
        for k in 0..draws as u64 {
            let mut lr = rng_for(seed, stream_id(StreamTag::MeanFieldLevels, realization, k));
            let mut qr = rng_for(
                seed,
                stream_id(StreamTag::MeanFieldCoupling, realization, k),
            );
            subsystems.push(Subsystem {
                levels: rmt::sample_levels_with(ensemble, &mut lr)?,
                coupling: rmt::sample_coupling_with(ensemble.m, &mut qr).scaled(qbar2),
            });
        }
        while subsystems.len() < n {
            subsystems.push(subsystems[0].clone());
        }
        Self::new(subsystems, identical_copies)
    }

    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    pub fn m(&self) -> usize {
        self.subsystems[0].levels.len()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn identical_copies(&self) -> bool {
        self.identical_copies
    }

    /// `h ± Q/√N` for subsystem `k`.
    fn conditional(&self, k: usize, sign: f64) -> Result<HermitianMatrix, MeanFieldError> {
        let s = &self.subsystems[k];
        let g = sign / (self.n() as f64).sqrt();
        let mut h = s.coupling.matrix().map(|z| z * g);
        for (i, &e) in s.levels.iter().enumerate() {
            h[(i, i)] += Complex64::new(e, 0.0);
        }
        Ok(HermitianMatrix::new(h)?)
    }
}

/// Spectral data for one subsystem factor.
struct Factor {
    plus: Vec<f64>,
    minus: Vec<f64>,
    /// `|⟨a₋|b₊⟩|²`.
    weights: DMatrix<f64>,
}

impl Factor {
    fn new(bath: &MeanFieldBath, k: usize) -> Result<Self, MeanFieldError> {
        let plus: EigenPair = bath.conditional(k, 1.0)?.eig()?;
        let minus: EigenPair = bath.conditional(k, -1.0)?.eig()?;
        let overlap = minus.eigenvectors.ad_mul(&plus.eigenvectors);
        Ok(Self {
            plus: plus.eigenvalues,
            minus: minus.eigenvalues,
            weights: overlap.map(|z| z.norm_sqr()),
        })
    }

    /// `(1/M) Σ_ab |⟨a₋|b₊⟩|² e^{i(E⁻_a - E⁺_b)t}`.
    fn at(&self, t: f64) -> Complex64 {
        let m = self.plus.len();
        let v: Vec<Complex64> = self
            .plus
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * t))
            .collect();
        let mut sum = Complex64::new(0.0, 0.0);
        for (a, &ea) in self.minus.iter().enumerate() {
            let row: Complex64 = (0..m).map(|b| v[b] * self.weights[(a, b)]).sum();
            sum += Complex64::from_polar(1.0, ea * t) * row;
        }
        sum / m as f64
    }
}

/// `Γ_N(t)` on `t_grid`, multiplying subsystem factors in ascending `k`.
pub fn dephasing_factor(
    bath: &MeanFieldBath,
    t_grid: &[f64],
) -> Result<Vec<Complex64>, MeanFieldError> {
    let distinct = if bath.identical_copies { 1 } else { bath.n() };
    let factors = (0..distinct)
        .map(|k| Factor::new(bath, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(t_grid
        .iter()
        .map(|&t| {
            // Both branches start from the same state; skip the rounding of Σ|⟨a₋|b₊⟩|²/M.
            if t == 0.0 {
                return Complex64::new(1.0, 0.0);
            }
            let values: Vec<Complex64> = factors.iter().map(|f| f.at(t)).collect();
            let mut prod = Complex64::new(1.0, 0.0);
            for k in 0..bath.n() {
                prod *= values[if bath.identical_copies { 0 } else { k }];
            }
            prod
        })
        .collect())
}

/// `Γ_N(t)` by propagating the full spin ⊗ bath state.
///
/// The maximally mixed bath is written as the average over bath basis states
/// `|j⟩`; for each, `(ψ₊ + ψ₋)/√2 ⊗ |j⟩` is evolved under the full
/// block-diagonal Hamiltonian and the bath is traced out.
pub fn full_space_dephasing(
    bath: &MeanFieldBath,
    t_grid: &[f64],
) -> Result<Vec<Complex64>, MeanFieldError> {
    let n = bath.n();
    let m = bath.m();
    let dim = (0..n).try_fold(1usize, |d, _| {
        d.checked_mul(m).filter(|&d| d <= ORACLE_MAX_BATH_DIM)
    });
    let dim = dim.ok_or_else(|| {
        MeanFieldError::DimensionCap(format!("M^N exceeds {ORACLE_MAX_BATH_DIM}"))
    })?;

    // Σ_k 1⊗..⊗X_k⊗..⊗1 with subsystem 0 as the fastest index.
    let embed = |ops: &dyn Fn(usize) -> DMatrix<Complex64>| -> DMatrix<Complex64> {
        let mut total = DMatrix::<Complex64>::zeros(dim, dim);
        for k in 0..n {
            let x = ops(k);
            let stride = m.pow(k as u32);
            for col in 0..dim {
                let jc = (col / stride) % m;
                for jr in 0..m {
                    let v = x[(jr, jc)];
                    if v != Complex64::new(0.0, 0.0) {
                        let row = col - jc * stride + jr * stride;
                        total[(row, col)] += v;
                    }
                }
            }
        }
        total
    };
    let h0 = embed(&|k| {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            m,
            bath.subsystems[k]
                .levels
                .iter()
                .map(|&e| Complex64::new(e, 0.0)),
        ))
    });
    let q = embed(&|k| bath.subsystems[k].coupling.matrix().clone());
    let g = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let mut full = DMatrix::<Complex64>::zeros(2 * dim, 2 * dim);
    full.view_mut((0, 0), (dim, dim)).copy_from(&(&h0 + &q * g));
    full.view_mut((dim, dim), (dim, dim))
        .copy_from(&(&h0 - &q * g));
    let eig = HermitianMatrix::new(full)?.eig()?;

    let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut out = vec![Complex64::new(0.0, 0.0); t_grid.len()];
    for j in 0..dim {
        let mut psi = nalgebra::DVector::<Complex64>::zeros(2 * dim);
        psi[j] = amp;
        psi[dim + j] = amp;
        let c = eig.to_eigenbasis(&psi)?;
        for (slot, &t) in out.iter_mut().zip(t_grid) {
            let phi = eig.evolve_coefficients(t, &c);
            // ρ₊₋ = Σ_b Ψ₊,b conj(Ψ₋,b), divided by α₊ᾱ₋ = ½.
            let rho_pm: Complex64 = (0..dim).map(|b| phi[b] * phi[dim + b].conj()).sum();
            *slot += rho_pm * 2.0;
        }
    }
    Ok(out.into_iter().map(|z| z / dim as f64).collect())
}

/// Second-order cumulant of `-ln|Γ_N(t)|`:
///
/// ```text
/// (2/(M N)) Σ_k Σ_{m,m'} |Q_k,mm'|² · 4 sin²(ω t/2)/ω²,   ω = ε_m - ε_m'
/// ```
///
/// with the `ω → 0` limit `t²` for diagonal terms.
pub fn second_order_cumulant(bath: &MeanFieldBath, t_grid: &[f64]) -> Vec<f64> {
    let n = bath.n() as f64;
    let m = bath.m();
    t_grid
        .iter()
        .map(|&t| {
            let mut total = 0.0;
            for s in &bath.subsystems {
                for j in 0..m {
                    for i in 0..m {
                        let w = s.levels[i] - s.levels[j];
                        let f = if w == 0.0 {
                            t * t
                        } else {
                            let h = (0.5 * w * t).sin() / (0.5 * w);
                            h * h
                        };
                        total += s.coupling.weight(i, j) * f;
                    }
                }
            }
            2.0 * total / (m as f64 * n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldConfig {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub qbar2: f64,
    pub realizations: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub identical_copies: bool,
}

/// Ensemble-averaged `|Γ_N(t)|` for one bath ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleCurve {
    pub kind: EnsembleKind,
    pub mean_abs: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean over realizations of the time-averaged `|Γ|` in the final decade.
    pub long_time_mean: f64,
    pub long_time_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleComparison {
    pub t_grid: Vec<f64>,
    pub poisson: EnsembleCurve,
    pub goe: EnsembleCurve,
    /// `[t_max/10, t_max]`.
    pub window: (f64, f64),
    /// GOE long-time mean exceeds the Poisson one by more than two combined standard errors.
    pub goe_exceeds_poisson: bool,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn validate_config(cfg: &MeanFieldConfig) -> Result<(), MeanFieldError> {
    if cfg.realizations < 2 {
        return Err(RmtError::InsufficientSamples {
            needed: 2,
            got: cfg.realizations,
        }
        .into());
    }
    if cfg.t_grid.is_empty() || !cfg.t_grid.windows(2).all(|w| w[0] < w[1]) || cfg.t_grid[0] < 0.0 {
        return Err(MeanFieldError::InvalidArgument(
            "t grid must be non-empty, ascending and >= 0".into(),
        ));
    }
    Ok(())
}

/// `|Γ_N(t)|` for every realization of `kind`, in realization order.
pub fn ensemble_curves(
    cfg: &MeanFieldConfig,
    kind: EnsembleKind,
) -> Result<Vec<Vec<f64>>, MeanFieldError> {
    validate_config(cfg)?;
    let ens = LevelEnsemble::new(kind, cfg.m, cfg.delta)?;
    (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| {
            let bath =
                MeanFieldBath::sample(&ens, cfg.qbar2, cfg.n, cfg.seed, r, cfg.identical_copies)?;
            Ok(dephasing_factor(&bath, &cfg.t_grid)?
                .iter()
                .map(|z| z.norm())
                .collect())
        })
        .collect()
}

fn summarize(kind: EnsembleKind, curves: &[Vec<f64>], window: &[usize]) -> EnsembleCurve {
    let k = curves[0].len();
    let (mean_abs, stderr) = (0..k)
        .map(|j| mean_and_stderr(&curves.iter().map(|c| c[j]).collect::<Vec<_>>()))
        .unzip();
    let per_real: Vec<f64> = curves
        .iter()
        .map(|c| window.iter().map(|&j| c[j]).sum::<f64>() / window.len() as f64)
        .collect();
    let (long_time_mean, long_time_stderr) = mean_and_stderr(&per_real);
    EnsembleCurve {
        kind,
        mean_abs,
        stderr,
        long_time_mean,
        long_time_stderr,
    }
}

/// Poisson versus GOE subsystem spectra with shared couplings.
pub fn compare_ensembles(cfg: &MeanFieldConfig) -> Result<EnsembleComparison, MeanFieldError> {
    validate_config(cfg)?;
    let t_max = *cfg.t_grid.last().expect("validated non-empty");
    let lo = t_max / 10.0;
    let window: Vec<usize> = (0..cfg.t_grid.len())
        .filter(|&j| cfg.t_grid[j] >= lo)
        .collect();
    let poisson = summarize(
        EnsembleKind::PoissonSpacings,
        &ensemble_curves(cfg, EnsembleKind::PoissonSpacings)?,
        &window,
    );
    let goe = summarize(
        EnsembleKind::GoeMatrix,
        &ensemble_curves(cfg, EnsembleKind::GoeMatrix)?,
        &window,
    );
    let gap = goe.long_time_mean - poisson.long_time_mean;
    let sigma = (goe.long_time_stderr.powi(2) + poisson.long_time_stderr.powi(2)).sqrt();
    Ok(EnsembleComparison {
        t_grid: cfg.t_grid.clone(),
        goe_exceeds_poisson: gap > 2.0 * sigma,
        poisson,
        goe,
        window: (lo, t_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use proptest::prelude::*;

    fn bath(kind: EnsembleKind, m: usize, n: usize, qbar2: f64, seed: u64) -> MeanFieldBath {
        let ens = LevelEnsemble::new(kind, m, 1.0).unwrap();
        MeanFieldBath::sample(&ens, qbar2, n, seed, 0, false).unwrap()
    }

    #[test]
    fn unity_at_zero_time_and_zero_coupling() {
        let b = bath(EnsembleKind::PoissonSpacings, 20, 4, 1.0, 1);
        let g = dephasing_factor(&b, &[0.0]).unwrap();
        assert!((g[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let free = bath(EnsembleKind::GoeMatrix, 20, 4, 0.0, 1);
        for z in dephasing_factor(&free, &quad::linspace(0.0, 50.0, 11)).unwrap() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn product_formula_matches_full_space() {
        let b = bath(EnsembleKind::PoissonSpacings, 3, 2, 1.0, 42);
        let grid = quad::linspace(0.0, 20.0, 21);
        let fast = dephasing_factor(&b, &grid).unwrap();
        let slow = full_space_dephasing(&b, &grid).unwrap();
        for (a, s) in fast.iter().zip(&slow) {
            assert!((a - s).norm() <= 1e-10, "{a} {s}");
        }
    }

    #[test]
    fn identical_copies_equal_a_power() {
        let ens = LevelEnsemble::new(EnsembleKind::PoissonSpacings, 8, 1.0).unwrap();
        let b = MeanFieldBath::sample(&ens, 1.0, 3, 5, 0, true).unwrap();
        assert!(b.identical_copies());
        let single = MeanFieldBath::new(vec![b.subsystems()[0].clone()], false).unwrap();
        // A lone copy has coupling Q/1 rather than Q/√3, so compare against the
        // explicit three-copy product instead.
        let explicit = MeanFieldBath::new(b.subsystems().to_vec(), false).unwrap();
        let grid = [0.5, 2.0];
        assert_eq!(
            dephasing_factor(&b, &grid).unwrap(),
            dephasing_factor(&explicit, &grid).unwrap()
        );
        assert_eq!(single.n(), 1);
    }

    #[test]
    fn limits_enforced() {
        let ens = LevelEnsemble::new(EnsembleKind::PoissonSpacings, 513, 1.0).unwrap();
        assert!(matches!(
            MeanFieldBath::sample(&ens, 1.0, 2, 0, 0, false),
            Err(MeanFieldError::DimensionCap(_))
        ));
        let ens = LevelEnsemble::new(EnsembleKind::PoissonSpacings, 4, 1.0).unwrap();
        assert!(matches!(
            MeanFieldBath::sample(&ens, 1.0, 65, 0, 0, false),
            Err(MeanFieldError::DimensionCap(_))
        ));
        let big = bath(EnsembleKind::PoissonSpacings, 10, 4, 1.0, 0);
        assert!(matches!(
            full_space_dephasing(&big, &[1.0]),
            Err(MeanFieldError::DimensionCap(_))
        ));
    }

    #[test]
    fn couplings_shared_across_ensembles() {
        let a = bath(EnsembleKind::PoissonSpacings, 16, 3, 1.0, 8);
        let b = bath(EnsembleKind::GoeMatrix, 16, 3, 1.0, 8);
        for (x, y) in a.subsystems().iter().zip(b.subsystems()) {
            assert_eq!(x.coupling, y.coupling);
            assert_ne!(x.levels, y.levels);
        }
    }

    #[test]
    fn cumulant_matches_at_weak_coupling() {
        let b = bath(EnsembleKind::PoissonSpacings, 32, 8, 1e-3, 3);
        let grid = quad::geomspace(0.1, 5.0, 12);
        let exact = dephasing_factor(&b, &grid).unwrap();
        let cum = second_order_cumulant(&b, &grid);
        for (z, c) in exact.iter().zip(&cum) {
            let e = -z.norm().ln();
            assert!((e - c).abs() <= 0.1 * c, "{e} {c}");
        }
    }

    #[test]
    fn comparison_is_deterministic() {
        let cfg = MeanFieldConfig {
            n: 4,
            m: 16,
            delta: 1.0,
            qbar2: 1.0,
            realizations: 3,
            seed: 12,
            t_grid: quad::geomspace(0.1, 100.0, 10),
            identical_copies: false,
        };
        let a = compare_ensembles(&cfg).unwrap();
        let b = compare_ensembles(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.window, (10.0, 100.0));
        let mut bad = cfg.clone();
        bad.realizations = 1;
        assert!(compare_ensembles(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn bounded_and_time_reversal_conjugate(seed in 0u64..500, t in 0.0f64..200.0) {
            let b = bath(EnsembleKind::GoeMatrix, 16, 3, 1.0, seed);
            let g = dephasing_factor(&b, &[t, -t]).unwrap();
            prop_assert!(g[0].norm() <= 1.0 + 1e-12);
            prop_assert!((g[1] - g[0].conj()).norm() <= 1e-12);
        }
    }
}
