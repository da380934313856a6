//! Small linear least-squares helpers shared by extrapolation, unfolding and
//! rate fits.

use nalgebra::DMatrix;

/// Least-squares coefficients for `y ≈ Σ_k c_k φ_k(x)`.
///
/// `basis(x)` returns the row `[φ_0(x), φ_1(x), ...]`. Returns `None` when the
/// design matrix is rank deficient.
pub fn least_squares<B>(xs: &[f64], ys: &[f64], n_basis: usize, basis: B) -> Option<Vec<f64>>
where
    B: Fn(f64) -> Vec<f64>,
{
    let weights = design_pseudo_inverse(xs, n_basis, &basis)?;
    Some(
        weights
            .iter()
            .map(|row| row.iter().zip(ys).map(|(w, y)| w * y).sum())
            .collect(),
    )
}

/// Linear map from data to least-squares coefficients: `c_k = Σ_i W[k][i] y_i`.
///
/// Exposing the map lets callers propagate per-replicate data through the same
/// fit without re-solving.
pub fn least_squares_weights<B>(xs: &[f64], n_basis: usize, basis: B) -> Option<Vec<Vec<f64>>>
where
    B: Fn(f64) -> Vec<f64>,
{
    design_pseudo_inverse(xs, n_basis, &basis)
}

fn design_pseudo_inverse<B>(xs: &[f64], n_basis: usize, basis: &B) -> Option<Vec<Vec<f64>>>
where
    B: Fn(f64) -> Vec<f64>,
{
    let n = xs.len();
    if n < n_basis || n_basis == 0 {
        return None;
    }
    let mut a = DMatrix::<f64>::zeros(n, n_basis);
    for (i, &x) in xs.iter().enumerate() {
        let row = basis(x);
        debug_assert_eq!(row.len(), n_basis);
        for (k, v) in row.into_iter().enumerate() {
            a[(i, k)] = v;
        }
    }
    // Column scaling keeps the SVD well conditioned for mixed-magnitude bases.
    let scales: Vec<f64> = (0..n_basis)
        .map(|k| {
            let s = a.column(k).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for (k, s) in scales.iter().enumerate() {
        a.column_mut(k).scale_mut(1.0 / s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= 1e-13 * smax {
        return None;
    }
    let pinv = svd.pseudo_inverse(0.0).ok()?;
    Some(
        (0..n_basis)
            .map(|k| (0..n).map(|i| pinv[(k, i)] / scales[k]).collect())
            .collect(),
    )
}

/// Evaluates `Σ_k c_k x^k`.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
