//! Dense Hermitian eigendecomposition and unitary propagation.
//!
//! Backed by nalgebra's symmetric/Hermitian QR solver; this module adds the
//! validation, deterministic ordering and `e^{-iAt}` propagation the oracles
//! rely on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A†| = {0:e}")]
    NotHermitian(f64),
    #[error("eigensolver did not converge for n = {0}")]
    ConvergenceFailure(usize),
    #[error("vector length {got} does not match dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A validated complex Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<Complex64>);

impl HermitianMatrix {
    /// Validates `A = A†` within `1e-12` entrywise and stores the exactly
    /// symmetrized matrix.
    pub fn new(a: DMatrix<Complex64>) -> Result<Self, LinalgError> {
        let (rows, cols) = a.shape();
        if rows != cols || rows == 0 {
            return Err(LinalgError::Shape { rows, cols });
        }
        let mut worst = 0.0f64;
        for i in 0..rows {
            for j in 0..=i {
                worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
        if worst > HERMITICITY_TOL {
            return Err(LinalgError::NotHermitian(worst));
        }
        let sym = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
        Ok(Self(sym))
    }

    pub fn from_real(a: &DMatrix<f64>) -> Result<Self, LinalgError> {
        Self::new(a.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_iterator(
            d.len(),
            d.iter().map(|&x| Complex64::new(x, 0.0)),
        )))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    /// `⟨v|A|v⟩` (real for Hermitian `A`).
    pub fn expectation(&self, v: &DVector<Complex64>) -> Result<f64, LinalgError> {
        self.check_len(v.len())?;
        Ok(v.dotc(&(&self.0 * v)).re)
    }

    fn check_len(&self, len: usize) -> Result<(), LinalgError> {
        if len != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Full eigendecomposition.
    pub fn eig(&self) -> Result<EigenPair, LinalgError> {
        eig(self)
    }

    /// Ascending eigenvalues without eigenvectors.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, LinalgError> {
        if self.is_real() {
            return symmetric_eigenvalues(self.0.map(|z| z.re));
        }
        let mut vals: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }
}

/// Ascending eigenvalues of a real symmetric matrix without forming eigenvectors.
pub fn symmetric_eigenvalues(a: DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols || rows == 0 {
        return Err(LinalgError::Shape { rows, cols });
    }
    let worst = (&a - a.transpose()).amax();
    if worst > HERMITICITY_TOL {
        return Err(LinalgError::NotHermitian(worst));
    }
    let mut vals: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::ConvergenceFailure(rows));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Smallest eigenvalue of a Hermitian operator given only its action, by
/// Lanczos with full reorthogonalization started from `start`.
///
/// Stops once the Ritz residual `β_k |y_k|` drops below `tol·max(1, |θ|)`.
/// The start vector must overlap the ground state.
pub fn lowest_eigenvalue<F>(
    mut apply: F,
    start: &DVector<Complex64>,
    tol: f64,
) -> Result<f64, LinalgError>
where
    F: FnMut(&DVector<Complex64>) -> DVector<Complex64>,
{
    let n = start.len();
    let norm = start.norm();
    if n == 0 || !(norm > 0.0) {
        return Err(LinalgError::Shape { rows: n, cols: 1 });
    }
    let max_steps = n.min(400);
    let mut basis: Vec<DVector<Complex64>> = vec![start / Complex64::new(norm, 0.0)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    loop {
        let k = basis.len() - 1;
        let mut w = apply(&basis[k]);
        if w.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        alpha.push(basis[k].dotc(&w).re);
        // two passes of Gram-Schmidt keep the basis orthogonal to rounding
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&w);
                w.axpy(-c, q, Complex64::new(1.0, 0.0));
            }
        }
        let b = w.norm();
        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let se = SymmetricEigen::new(t);
        let (imin, theta) = se
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let residual = b * se.eigenvectors[(m - 1, imin)].abs();
        if residual <= tol * theta.abs().max(1.0) || b < 1e-14 * theta.abs().max(1.0) {
            return Ok(theta);
        }
        if m == max_steps {
            return Err(LinalgError::ConvergenceFailure(n));
        }
        beta.push(b);
        basis.push(w / Complex64::new(b, 0.0));
    }
}

fn max_iter(n: usize) -> usize {
    1000 * n.max(1)
}

/// Eigenvalues in ascending order with the matching unitary of eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<Complex64>,
}

/// Eigendecomposition with eigenvalues ascending; ties keep the solver's
/// column order (stable sort).
pub fn eig(a: &HermitianMatrix) -> Result<EigenPair, LinalgError> {
    let n = a.dim();
    let (values, vectors): (Vec<f64>, DMatrix<Complex64>) = if a.is_real() {
        let re = a.0.map(|z| z.re);
        let se = SymmetricEigen::try_new(re, f64::EPSILON, max_iter(n))
            .ok_or(LinalgError::ConvergenceFailure(n))?;
        (
            se.eigenvalues.iter().copied().collect(),
            se.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let se = SymmetricEigen::try_new(a.0.clone(), f64::EPSILON, max_iter(n))
            .ok_or(LinalgError::ConvergenceFailure(n))?;
        (se.eigenvalues.iter().copied().collect(), se.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = order.iter().map(|&i| values[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Ok(EigenPair {
        eigenvalues,
        eigenvectors,
    })
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Coefficients of `v` in the eigenbasis, `V† v`.
    pub fn to_eigenbasis(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>, LinalgError> {
        if v.len() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(self.eigenvectors.ad_mul(v))
    }

    /// `e^{-iAt} v` given eigenbasis coefficients `c = V† v`.
    pub fn evolve_coefficients(&self, t: f64, c: &DVector<Complex64>) -> DVector<Complex64> {
        let phased = DVector::from_iterator(
            c.len(),
            c.iter()
                .zip(&self.eigenvalues)
                .map(|(ci, &e)| ci * Complex64::from_polar(1.0, -e * t)),
        );
        &self.eigenvectors * phased
    }

    /// `e^{-iAt} v`.
    pub fn evolve(
        &self,
        t: f64,
        v: &DVector<Complex64>,
    ) -> Result<DVector<Complex64>, LinalgError> {
        Ok(self.evolve_coefficients(t, &self.to_eigenbasis(v)?))
    }

    /// `‖AV - VΛ‖_F`.
    pub fn residual(&self, a: &HermitianMatrix) -> f64 {
        let av = a.matrix() * &self.eigenvectors;
        let mut vl = self.eigenvectors.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            vl.column_mut(j).scale_mut(e);
        }
        (av - vl).norm()
    }

    /// `‖V†V - I‖_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim();
        (self.eigenvectors.ad_mul(&self.eigenvectors) - DMatrix::<Complex64>::identity(n, n)).norm()
    }
}

/// `e^{-iAt} v` via a fresh eigendecomposition. Reuse an [`EigenPair`] when
/// propagating over a time grid.
pub fn evolve(
    a: &HermitianMatrix,
    t: f64,
    v: &DVector<Complex64>,
) -> Result<DVector<Complex64>, LinalgError> {
    a.check_len(v.len())?;
    eig(a)?.evolve(t, v)
}
