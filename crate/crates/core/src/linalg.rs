//! Small dense linear algebra on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LanError, Result};

/// Row-major slice to matrix.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `sigma * sigma^T` for a row-major `n x m` matrix.
pub fn gram_of_rows(n: usize, m: usize, sigma: &[f64]) -> DMatrix<f64> {
    let s = from_row_major(n, m, sigma);
    &s * s.transpose()
}

/// Symmetric matrix function `V diag(phi(lambda)) V^T`.
pub fn sym_apply<F>(m: &DMatrix<f64>, phi: F) -> DMatrix<f64>
where
    F: Fn(f64) -> f64,
{
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let mapped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| phi(l)),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&mapped) * eig.eigenvectors.transpose()
}

/// Inverse and inverse square root of a symmetric positive definite matrix.
pub fn spd_inverse_and_root(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !is_symmetric(m, 1e-10) {
        return Err(LanError::NotPositiveDefinite(
            "matrix is not symmetric".into(),
        ));
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(LanError::NotPositiveDefinite(format!(
            "smallest eigenvalue {min:e}"
        )));
    }
    let v = &eig.eigenvectors;
    let inv = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| 1.0 / l),
    );
    let inv_sqrt = inv.map(f64::sqrt);
    Ok((
        v * DMatrix::from_diagonal(&inv) * v.transpose(),
        v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose(),
    ))
}

/// Least-squares slope fit `y ~ a + b x`, returning `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}
