//! Numerical laboratory for exactly solvable pure-dephasing models.
//!
//! Two environments are covered:
//!
//! * a two-level system linearly coupled to a bosonic field with a power-law
//!   form factor `|g(ω)|² = λ ω^(κ-1)` ([`specfun`] for the closed forms,
//!   [`fock`] for a brute-force truncated Fock-space oracle), and
//! * an ensemble of random-level subsystems coupled through a traceless
//!   operator `Q` ([`rmt`] for spectral-function estimation, [`meanfield`] for
//!   direct finite-`N` simulation).
//!
//! Throughout, `ħ = k_B = 1` and the tunnelling splitting of the two-level
//! system is set to zero.

// `!(x > 0.0)` style guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fit;
pub mod fock;
pub mod linalg;
pub mod meanfield;
pub mod quad;
pub mod rmt;
pub mod seed;
pub mod specfun;
pub mod special;

pub use fock::{DiscretizationScheme, DiscretizedBath, FockError, QubitState, TruncatedFockSpace};
pub use linalg::{EigenPair, HermitianMatrix, LinalgError};
pub use meanfield::{MeanFieldBath, MeanFieldError};
pub use quad::{IntegrandSpec, QuadError, QuadResult};
pub use rmt::{CouplingMatrix, EnsembleKind, LevelEnsemble, LevelSet, RmtError, SpectralEstimate};
pub use specfun::{
    CutoffShape, DecoherenceCurve, ExtReal, FormFactor, Method, Regime, SpecError, SpectralFunction,
};

pub use num_complex::Complex64;

/// Version string embedded in every CLI sidecar.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
