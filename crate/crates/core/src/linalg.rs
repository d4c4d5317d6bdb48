//! Dense eigen-solves backing the transfer matrices.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Block count up to which spectra are computed by dense decomposition.
pub const DENSE_LIMIT: usize = 512;

/// Eigenvalues of a real matrix, sorted by decreasing modulus.
pub fn spectrum_real(m: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = if m.nrows() == 1 {
        vec![Complex64::new(m[(0, 0)], 0.0)]
    } else {
        m.complex_eigenvalues().iter().copied().collect()
    };
    sort_by_modulus(&mut ev);
    ev
}

/// Eigenvalues of a complex matrix, sorted by decreasing modulus.
pub fn spectrum_complex(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = if m.nrows() == 1 {
        vec![m[(0, 0)]]
    } else {
        let (_, t) = Schur::new(m.clone()).unpack();
        t.diagonal().iter().copied().collect()
    };
    sort_by_modulus(&mut ev);
    ev
}

fn sort_by_modulus(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
}

/// Largest real eigenvalue of a nonnegative irreducible matrix.
pub fn perron_root(m: &DMatrix<f64>) -> f64 {
    spectrum_real(m)
        .into_iter()
        .filter(|z| z.im.abs() <= 1e-9 * z.norm().max(1.0))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvector for a simple eigenvalue `lambda` by shifted inverse iteration.
pub fn eigenvector_for(m: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let n = m.nrows();
    let shift = lambda + 1e-9 * lambda.abs().max(1e-300);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..4 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| Error::numerical("singular shifted matrix in inverse iteration"))?;
        let norm = y.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::numerical("inverse iteration diverged"));
        }
        x = y / norm;
    }
    Ok(x)
}

/// Perron root and right eigenvector by power iteration on `(M + I)/2`.
pub fn power_iteration(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut x = vec![1.0 / n as f64; n];
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let mx = apply(&x);
        let y: Vec<f64> = mx.iter().zip(&x).map(|(a, b)| 0.5 * (a + b)).collect();
        let s: f64 = y.iter().sum();
        let y: Vec<f64> = y.iter().map(|v| v / s).collect();
        lambda = 2.0 * s - 1.0;
        residual = mx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - lambda * b).abs())
            .fold(0.0, f64::max)
            / lambda.abs().max(1e-300);
        x = y;
        if residual <= tol {
            return Ok((lambda, x));
        }
    }
    log::warn!("power iteration stopped at residual {residual:.3e} (lambda {lambda})");
    Err(Error::NonConvergence { residual })
}
