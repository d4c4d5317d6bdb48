//! Complex operators `L_ab = L_{f^(a) - ibτ}` and their spectral radii.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, DENSE_LIMIT};
use crate::models::SuspensionModel;
use crate::potential::{ComplexFn, RealFn};
use crate::transfer::{self, ComplexMatrix, NormalizedPotential, TransferMatrix};

/// Tolerance used for the pressure root behind every complex operator.
pub const ROOT_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct ComplexTransfer {
    pub a: f64,
    pub b: f64,
    pub matrix: ComplexMatrix,
    /// `max |(|L_ab entry|) - M_a entry|`.
    pub modulus_residual: f64,
}

impl ComplexTransfer {
    pub fn block_depth(&self) -> usize {
        self.matrix.block_depth()
    }

    /// Builds `L_ab` at depth `k` from an already normalized potential.
    pub fn from_normalized(norm: &NormalizedPotential, tau: &RealFn, b: f64, k: usize) -> Result<Self> {
        let real = norm.matrix(k)?;
        let tau = tau.refine(k)?;
        let weights: Vec<Complex64> = real
            .weights()
            .iter()
            .zip(tau.values())
            .map(|(&r, &t)| Complex64::from_polar(r, -b * t))
            .collect();
        let modulus_residual = weights
            .iter()
            .zip(real.weights())
            .map(|(z, r)| (z.norm() - r).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            a: norm.a,
            b,
            matrix: real.with_weights(weights),
            modulus_residual,
        })
    }
}

pub fn assemble_complex(model: &SuspensionModel, a: f64, b: f64) -> Result<ComplexTransfer> {
    let norm = transfer::normalize(model, a, ROOT_TOL)?;
    ComplexTransfer::from_normalized(&norm, &model.roof, b, norm.depth())
}

pub fn dense_complex(m: &ComplexMatrix) -> DMatrix<Complex64> {
    let n = m.len();
    let mut d = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for u in 0..n {
        for &w in m.row(u) {
            d[(u, w)] = m.weights()[w];
        }
    }
    d
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpectralRadius {
    pub radius: f64,
    /// Modulus of the second eigenvalue; NaN when not computed densely.
    pub second_modulus: f64,
    /// True for a dense eigen-solve, false for the Gelfand estimate.
    pub exact: bool,
    pub uncertainty: f64,
}

pub fn spectral_radius(op: &ComplexTransfer) -> SpectralRadius {
    spectral_radius_with(&op.matrix, DENSE_LIMIT)
}

/// Spectral radius with a configurable dense-solve threshold.
pub fn spectral_radius_with(m: &ComplexMatrix, dense_limit: usize) -> SpectralRadius {
    if m.len() <= dense_limit {
        let ev = linalg::spectrum_complex(&dense_complex(m));
        SpectralRadius {
            radius: ev[0].norm(),
            second_modulus: ev.get(1).map_or(0.0, |z| z.norm()),
            exact: true,
            uncertainty: 0.0,
        }
    } else {
        gelfand(m)
    }
}

/// `‖Lᵐx‖^{1/m}` with Richardson extrapolation in `1/m`.
fn gelfand(m: &ComplexMatrix) -> SpectralRadius {
    let n = m.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5)))
        .collect();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let x0 = norm(&x);
    x.iter_mut().for_each(|z| *z /= x0);
    let mut log_norm = 0.0;
    let mut e = Vec::new();
    let mut step = 0usize;
    let mut prev_r = f64::NAN;
    let mut unc = f64::INFINITY;
    let mut target = 16usize;
    while target <= 1 << 14 {
        while step < target {
            x = m.apply(&x);
            let s = norm(&x);
            if s == 0.0 {
                return SpectralRadius {
                    radius: 0.0,
                    second_modulus: f64::NAN,
                    exact: false,
                    uncertainty: 0.0,
                };
            }
            log_norm += s.ln();
            x.iter_mut().for_each(|z| *z /= s);
            step += 1;
        }
        e.push(log_norm / step as f64);
        if e.len() >= 2 {
            let r = 2.0 * e[e.len() - 1] - e[e.len() - 2];
            if prev_r.is_finite() {
                unc = (r.exp() - prev_r.exp()).abs();
                if unc < 1e-10 {
                    prev_r = r;
                    break;
                }
            }
            prev_r = r;
        }
        target *= 2;
    }
    if unc >= 1e-6 {
        log::warn!("Gelfand estimate unconverged; uncertainty {unc:.3e}");
    }
    SpectralRadius {
        radius: prev_r.exp(),
        second_modulus: f64::NAN,
        exact: false,
        uncertainty: unc,
    }
}

/// `∫|L_ab^{mN} h0|² dν` for `m = 0..=m_max`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayTable {
    pub values: Vec<f64>,
    /// Per-step geometric rate fitted on the tail half.
    pub rho: f64,
    /// Set when `h0` was scaled down to `‖h0‖_{θ,b} = 1`.
    pub rescaled: bool,
    pub scale: f64,
}

pub fn iterate_decay(
    model: &SuspensionModel,
    a: f64,
    b: f64,
    h0: &ComplexFn,
    n: usize,
    m_max: usize,
) -> Result<DecayTable> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let norm_a = transfer::normalize(model, a, ROOT_TOL)?;
    let norm0 = if a == 0.0 {
        norm_a.clone()
    } else {
        transfer::normalize(model, 0.0, ROOT_TOL)?
    };
    let k = norm_a.depth().max(h0.depth());
    let op = ComplexTransfer::from_normalized(&norm_a, &model.roof, b, k)?;
    let nu = transfer::gibbs_from_normalized(&model.potential, &model.roof, &norm0, k)?;
    let size = h0.norm_theta_b(model.theta, b.abs().max(1.0))?.theta_b_norm;
    let (rescaled, scale) = if size > 1.0 { (true, 1.0 / size) } else { (false, 1.0) };
    let mut h: Vec<Complex64> = h0
        .refine_onto(op.matrix.index())
        .values()
        .iter()
        .map(|z| z * scale)
        .collect();
    let masses = nu.masses.values();
    let l2 = |v: &[Complex64]| v.iter().zip(masses).map(|(z, m)| z.norm_sqr() * m).sum::<f64>();
    let mut values = vec![l2(&h)];
    for _ in 0..m_max {
        h = op.matrix.apply_power(&h, n);
        values.push(l2(&h));
    }
    let rho = tail_rate(&values);
    Ok(DecayTable {
        values,
        rho,
        rescaled,
        scale,
    })
}

/// Log-linear rate over the tail half of a table; 0 for an all-zero tail.
pub(crate) fn tail_rate(values: &[f64]) -> f64 {
    let half = values.len() / 2;
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .skip(half)
        .filter(|(_, &v)| v > 0.0)
        .map(|(m, &v)| (m as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    transfer::log_linear_slope(&pts).exp()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanRow {
    pub b: f64,
    pub spectral_radius: f64,
    pub gap: f64,
    pub second_modulus: f64,
}

/// Spectral radius of `L_ab` for every `b` in the grid, in grid order.
pub fn contraction_scan(model: &SuspensionModel, a: f64, b_grid: &[f64]) -> Result<Vec<ScanRow>> {
    let norm = transfer::normalize(model, a, ROOT_TOL)?;
    scan_normalized(&norm, &model.roof, b_grid, DENSE_LIMIT)
}

pub fn scan_normalized(
    norm: &NormalizedPotential,
    tau: &RealFn,
    b_grid: &[f64],
    dense_limit: usize,
) -> Result<Vec<ScanRow>> {
    if b_grid.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid("b grid must be finite"));
    }
    let k = norm.depth();
    let base: TransferMatrix<f64> = norm.matrix(k)?;
    let tau = tau.refine(k)?;
    Ok(b_grid
        .par_iter()
        .map(|&b| {
            let w: Vec<Complex64> = base
                .weights()
                .iter()
                .zip(tau.values())
                .map(|(&r, &t)| Complex64::from_polar(r, -b * t))
                .collect();
            let sr = spectral_radius_with(&base.with_weights(w), dense_limit);
            ScanRow {
                b,
                spectral_radius: sr.radius,
                gap: 1.0 - sr.radius,
                second_modulus: sr.second_modulus,
            }
        })
        .collect())
}

/// Radii of `L_ab` at block depths `k`, `k+1`, `k+2`.
pub fn radii_by_depth(model: &SuspensionModel, a: f64, b: f64) -> Result<Vec<(usize, f64)>> {
    let norm = transfer::normalize(model, a, ROOT_TOL)?;
    let k = norm.depth();
    (k..=k + 2)
        .map(|d| {
            let op = ComplexTransfer::from_normalized(&norm, &model.roof, b, d)?;
            Ok((d, spectral_radius(&op).radius))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample {
    pub a: f64,
    pub b: f64,
    pub spectral_radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContractionCertificate {
    pub pass: bool,
    pub a_values: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub rho_target: f64,
    pub max_radius: f64,
    pub counterexample: Option<Counterexample>,
    pub note: &'static str,
}

pub const GRID_NOTE: &str =
    "grid certificate: radii were checked at the listed grid points only; nothing is claimed between them";

pub fn certify_eventually_contracting(
    model: &SuspensionModel,
    a0: f64,
    b0: f64,
    b_max: f64,
    grid_step: f64,
    rho_target: f64,
) -> Result<ContractionCertificate> {
    if !(rho_target > 0.0 && rho_target < 1.0) {
        return Err(Error::invalid("rho_target must lie in (0,1)"));
    }
    if !(b0 >= 1.0) || !(b_max >= b0) || !(grid_step > 0.0) {
        return Err(Error::invalid("need 1 <= b0 <= b_max and a positive grid step"));
    }
    let a_values = if a0 == 0.0 {
        vec![0.0]
    } else {
        vec![-a0.abs(), 0.0, a0.abs()]
    };
    let count = ((b_max - b0) / grid_step * (1.0 + 1e-12)).floor() as usize + 1;
    let b_grid: Vec<f64> = (0..count).map(|j| b0 + j as f64 * grid_step).collect();
    let mut first: Option<Counterexample> = None;
    let mut max_radius = 0.0f64;
    for &a in &a_values {
        let rows = contraction_scan(model, a, &b_grid)?;
        for r in rows {
            max_radius = max_radius.max(r.spectral_radius);
            if r.spectral_radius > rho_target && first.as_ref().map_or(true, |c| r.b < c.b) {
                first = Some(Counterexample {
                    a,
                    b: r.b,
                    spectral_radius: r.spectral_radius,
                });
                break;
            }
        }
    }
    Ok(ContractionCertificate {
        pass: first.is_none(),
        a_values,
        b_grid,
        rho_target,
        max_radius,
        counterexample: first,
        note: GRID_NOTE,
    })
}
