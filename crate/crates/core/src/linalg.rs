//! Small dense linear algebra helpers on symmetric systems.
//!
//! Design matrices here are at most a few dozen columns, so everything is
//! solved directly. Factorizations are delegated to nalgebra; the ndarray
//! types used by the rest of the crate are converted at the boundary.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2};

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_na(a: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

/// Solve the symmetric positive definite system `a x = b` by Cholesky,
/// retrying with an increasing ridge on the diagonal when the factorization
/// fails. Returns the solution and the ridge actually applied.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>, base_ridge: f64) -> Result<(Array1<f64>, f64)> {
    let n = a.nrows();
    let na = to_na(a);
    let nb = DVector::from_iterator(n, b.iter().copied());
    let scale = (0..n).map(|i| a[[i, i]].abs()).sum::<f64>() / n.max(1) as f64;
    let mut ridge = base_ridge;
    for _ in 0..8 {
        let mut m = na.clone();
        if ridge > 0.0 {
            for i in 0..n {
                m[(i, i)] += ridge * scale.max(1.0);
            }
        }
        if let Some(ch) = Cholesky::new(m) {
            let x = ch.solve(&nb);
            if x.iter().all(|v| v.is_finite()) {
                return Ok((Array1::from_iter(x.iter().copied()), ridge));
            }
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
    }
    Err(Error::Numerical("singular system in solve_spd".into()))
}

/// Inverse of a symmetric positive definite matrix, with the same ridge
/// retry policy as [`solve_spd`].
pub fn inv_spd(a: &Array2<f64>, base_ridge: f64) -> Result<(Array2<f64>, f64)> {
    let n = a.nrows();
    let na = to_na(a);
    let scale = (0..n).map(|i| a[[i, i]].abs()).sum::<f64>() / n.max(1) as f64;
    let mut ridge = base_ridge;
    for _ in 0..8 {
        let mut m = na.clone();
        if ridge > 0.0 {
            for i in 0..n {
                m[(i, i)] += ridge * scale.max(1.0);
            }
        }
        if let Some(ch) = Cholesky::new(m) {
            let inv = ch.inverse();
            if inv.iter().all(|v| v.is_finite()) {
                return Ok((from_na(&inv), ridge));
            }
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
    }
    Err(Error::Numerical("singular matrix in inv_spd".into()))
}

/// Lower Cholesky factor (for correlated normal draws). Adds the given ridge
/// up front; fails if the matrix is not PD after 8 boosts.
pub fn cholesky_lower(a: &Array2<f64>, base_ridge: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).sum::<f64>() / n.max(1) as f64;
    let mut ridge = base_ridge;
    for _ in 0..8 {
        let mut m = to_na(a);
        if ridge > 0.0 {
            for i in 0..n {
                m[(i, i)] += ridge * scale.max(1.0);
            }
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok(from_na(&ch.l()));
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
    }
    Err(Error::Numerical("matrix is not positive definite".into()))
}

/// Indices of columns whose Cholesky pivot collapses, i.e. columns that are
/// (nearly) linear combinations of earlier ones. Used to *report* collinear
/// predictors; the solve itself goes through the ridge path.
pub fn weak_pivot_columns(a: &Array2<f64>, rel_tol: f64) -> Vec<usize> {
    let n = a.nrows();
    let mut l = vec![0.0f64; n * n];
    let mut weak = Vec::new();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0f64, f64::max);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= rel_tol * scale.max(1.0) {
            weak.push(j);
            l[j * n + j] = (rel_tol * scale.max(1.0)).sqrt().max(1e-300);
        } else {
            l[j * n + j] = d.sqrt();
        }
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / l[j * n + j];
        }
    }
    weak
}

/// x' a x for symmetric a.
pub fn quad_form(a: &Array2<f64>, x: &Array1<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += x[i] * a[[i, j]] * x[j];
        }
    }
    acc
}
