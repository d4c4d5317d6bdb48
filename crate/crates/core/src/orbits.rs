//! Primitive periodic orbits, entropy, the Ruelle zeta function and orbit counting.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::complexop::{dense_complex, ROOT_TOL};
use crate::error::{Error, Result};
use crate::models::SuspensionModel;
use crate::potential::RealFn;
use crate::sft::{SymbolicSystem, Word};
use crate::transfer::{PressureCurve, TransferMatrix};

/// Largest number of necklaces an enumeration may produce.
pub const ORBIT_BUDGET: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitRecord {
    /// Least rotation of the cycle.
    pub necklace: Word,
    pub n: usize,
    pub period: f64,
}

/// Lyndon words of length `≤ n` over `0..k`, in lexicographic order (Duval).
pub fn lyndon_words_up_to(k: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    if n == 0 || k == 0 {
        return out;
    }
    let mut w: Vec<u8> = vec![0];
    loop {
        out.push(w.clone());
        let m = w.len();
        while w.len() < n {
            w.push(w[w.len() - m]);
        }
        while w.last() == Some(&(k as u8 - 1)) {
            w.pop();
        }
        match w.last_mut() {
            Some(last) => *last += 1,
            None => break,
        }
    }
    out
}

/// Lyndon words of length exactly `n`.
pub fn lyndon_words(k: usize, n: usize) -> Vec<Vec<u8>> {
    let mut v = lyndon_words_up_to(k, n);
    v.retain(|w| w.len() == n);
    v
}

/// Number of primitive period-`n` orbits, `(1/n) Σ_{d|n} μ(d) tr A^{n/d}`.
pub fn primitive_count_mobius(system: &SymbolicSystem, n: usize) -> i128 {
    let total: i128 = (1..=n)
        .filter(|d| n % d == 0)
        .map(|d| mobius(d) as i128 * system.periodic_point_count(n / d) as i128)
        .sum();
    total / n as i128
}

pub fn mobius(n: usize) -> i32 {
    let mut m = n;
    let mut sign = 1;
    let mut p = 2;
    while p * p <= m {
        if m % p == 0 {
            m /= p;
            if m % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if m > 1 {
        sign = -sign;
    }
    sign
}

/// `τ_n` around the cycle of `w`, feeding the roof its periodic extension.
pub fn cycle_period(roof: &RealFn, w: &[u8]) -> f64 {
    let n = w.len();
    let ext: Vec<u8> = w.iter().cycle().take(n + roof.depth() - 1).copied().collect();
    roof.birkhoff_unchecked(&ext, n)
}

fn expected_orbits(system: &SymbolicSystem, n_max: usize) -> f64 {
    (1..=n_max)
        .map(|n| system.periodic_point_count(n) as f64 / n as f64)
        .sum()
}

/// All primitive cyclically admissible necklaces of length `≤ n_max`,
/// ordered by length and then lexicographically.
pub fn primitive_orbits(model: &SuspensionModel, n_max: usize) -> Result<Vec<OrbitRecord>> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let sys = &model.system;
    let expected = expected_orbits(sys, n_max);
    if expected > ORBIT_BUDGET {
        return Err(Error::Budget(format!(
            "about {expected:.3e} necklaces up to length {n_max}; use a smaller bound"
        )));
    }
    let mut words = lyndon_words_up_to(sys.alphabet_size(), n_max);
    words.retain(|w| sys.is_cyclically_admissible(w));
    words.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.cmp(y)));
    Ok(words
        .into_par_iter()
        .map(|w| OrbitRecord {
            period: cycle_period(&model.roof, &w),
            n: w.len(),
            necklace: Word(w),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EntropyResult {
    pub h_t: f64,
    pub residual: f64,
}

/// Root of `s ↦ Pr_σ(-sτ)`.
pub fn topological_entropy(model: &SuspensionModel, tol: f64) -> Result<EntropyResult> {
    let zero = RealFn::zero(&model.system, 1)?;
    let curve = PressureCurve::new(&zero, &model.roof)?;
    let h_t = curve.root(tol)?;
    Ok(EntropyResult {
        h_t,
        residual: curve.at(h_t)?.abs(),
    })
}

/// Block matrix `M(s)` with weights `e^{-sτ(w)}` at the roof depth.
pub fn zeta_matrix(model: &SuspensionModel, s: Complex64) -> Result<TransferMatrix<Complex64>> {
    let g = model.roof.map(|t| -s * t);
    TransferMatrix::assemble(&g, model.roof.depth())
}

/// `tr M(s)ⁿ`.
pub fn trace_power(model: &SuspensionModel, s: Complex64, n: usize) -> Result<Complex64> {
    let m = dense_complex(&zeta_matrix(model, s)?);
    let mut p = DMatrix::identity(m.nrows(), m.nrows());
    for _ in 0..n {
        p = &p * &m;
    }
    Ok(p.trace())
}

/// `Σ_{σⁿx = x} e^{-sτ_n(x)}` by enumerating the fixed points of `σⁿ`.
pub fn periodic_sum(model: &SuspensionModel, s: Complex64, n: usize) -> Complex64 {
    model
        .system
        .admissible_raw(n)
        .into_iter()
        .filter(|w| model.system.is_cyclically_admissible(w))
        .map(|w| (-s * cycle_period(&model.roof, &w)).exp())
        .sum()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZetaEuler {
    pub value: Complex64,
    /// `-Σ_γ log(1 - e^{-sℓ(γ)})` over the included orbits.
    pub log_value: Complex64,
    /// Estimate of `|log ζ - log_value|` from the omitted shells.
    pub tail_bound: f64,
    pub n_max: usize,
    pub orbits: usize,
}

/// Number of shells past `n_max` whose traces enter the tail bound exactly.
const EXACT_TAIL_SHELLS: usize = 30;

/// Truncated Euler product over primitive orbits of word length `≤ n_max`.
pub fn zeta_euler(model: &SuspensionModel, s: Complex64, n_max: usize) -> Result<ZetaEuler> {
    let h = topological_entropy(model, ROOT_TOL)?;
    if !(s.re > h.h_t) {
        return Err(Error::invalid(format!(
            "Re(s) = {} is outside certified convergence half-plane Re(s) > h_T = {}",
            s.re, h.h_t
        )));
    }
    let orbits = if n_max == 0 {
        Vec::new()
    } else {
        primitive_orbits(model, n_max)?
    };
    let log_value: Complex64 = orbits
        .iter()
        .map(|o| -(Complex64::new(1.0, 0.0) - (-s * o.period).exp()).ln())
        .sum();
    let tail_bound = euler_tail_bound(model, s.re, n_max)?;
    Ok(ZetaEuler {
        value: log_value.exp(),
        log_value,
        tail_bound,
        n_max,
        orbits: orbits.len(),
    })
}

/// `Σ_{n > n_max} tr M(σ)ⁿ / (n (1 - e^{-σ n τ_min}))`: exact traces for 30 shells, then
/// a geometric remainder in the spectral radius of `M(σ)`.
fn euler_tail_bound(model: &SuspensionModel, sigma: f64, n_max: usize) -> Result<f64> {
    let tmin = model.roof.min_value();
    let g = model.roof.map(|t| -sigma * t);
    let m = TransferMatrix::assemble(&g, model.roof.depth())?;
    let d = crate::transfer::dense_real(&m);
    let r = crate::linalg::perron_root(&d);
    let mut p = DMatrix::identity(d.nrows(), d.nrows());
    for _ in 0..n_max {
        p = &p * &d;
    }
    let mut bound = 0.0;
    let last = n_max + EXACT_TAIL_SHELLS;
    for n in (n_max + 1)..=last {
        p = &p * &d;
        let q = (-sigma * n as f64 * tmin).exp();
        bound += p.trace() / (n as f64 * (1.0 - q));
    }
    let q = (-sigma * (last + 1) as f64 * tmin).exp();
    bound += d.nrows() as f64 * r.powi(last as i32 + 1) / ((1.0 - r) * (last + 1) as f64 * (1.0 - q));
    Ok(bound)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ZetaDet {
    /// `1/det(I - M(s))`; infinite at a pole.
    pub value: Complex64,
    pub det: Complex64,
    pub at_pole: bool,
}

pub const POLE_TOL: f64 = 1e-10;

/// `ζ(s) = 1/det(I - M(s))`.
pub fn zeta_det(model: &SuspensionModel, s: Complex64) -> Result<ZetaDet> {
    let m = dense_complex(&zeta_matrix(model, s)?);
    let n = m.nrows();
    let det = (DMatrix::identity(n, n) - m).determinant();
    let at_pole = det.norm() <= POLE_TOL;
    let value = if at_pole {
        Complex64::new(f64::INFINITY.copysign(det.re), 0.0)
    } else {
        Complex64::new(1.0, 0.0) / det
    };
    Ok(ZetaDet { value, det, at_pole })
}

/// `|ζ_det|` on a rectangular grid, for inspecting the strip left of the pole.
pub fn zeta_grid(
    model: &SuspensionModel,
    re: &[f64],
    im: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(re.len() * im.len());
    for &x in re {
        for &y in im {
            out.push((x, y, zeta_det(model, Complex64::new(x, y))?.value.norm()));
        }
    }
    Ok(out)
}

/// `∫_2^x du / ln u`, by adaptive Simpson quadrature in `t = ln u`.
pub fn li(x: f64) -> Result<f64> {
    if !(x >= 2.0) {
        return Err(Error::invalid(format!("li(x) needs x >= 2, got {x}")));
    }
    if x == 2.0 {
        return Ok(0.0);
    }
    let f = |t: f64| t.exp() / t;
    let (a, b) = (2f64.ln(), x.ln());
    // split so that each piece has a comparable integrand scale
    let pieces = ((b - a).ceil() as usize).max(1);
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for j in 0..pieces {
        let lo = a + j as f64 * h;
        let hi = if j + 1 == pieces { b } else { lo + h };
        let scale = f(hi).max(f(lo));
        total += adaptive_simpson(&f, lo, hi, 1e-15 * scale * (hi - lo), 60);
    }
    Ok(total)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fc: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PntRow {
    pub lambda: f64,
    pub pi: u64,
    pub li: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PntReport {
    pub h_t: f64,
    pub n_max: usize,
    pub rows: Vec<PntRow>,
    pub truncated: bool,
}

/// `π(λ)` against `li(e^{h_T λ})` at `shells` equally spaced `λ ≤ λ_max`.
pub fn pnt_report(model: &SuspensionModel, lambda_max: f64, shells: usize) -> Result<PntReport> {
    if !(lambda_max > 0.0) || shells == 0 {
        return Err(Error::invalid("need lambda_max > 0 and at least one shell"));
    }
    let tmin = model.roof.min_value();
    let mut n_max = (lambda_max / tmin).floor() as usize;
    let mut truncated = false;
    while n_max > 1 && expected_orbits(&model.system, n_max) > ORBIT_BUDGET {
        n_max -= 1;
        truncated = true;
    }
    let n_max = n_max.max(1);
    if truncated {
        log::warn!("orbit budget reached; counting is exact only below word length {}", n_max + 1);
    }
    let orbits = primitive_orbits(model, n_max)?;
    let h_t = topological_entropy(model, ROOT_TOL)?.h_t;
    // every orbit of period ≤ λ has word length ≤ λ / τ_min
    let exact_limit = if truncated {
        (n_max + 1) as f64 * tmin
    } else {
        f64::INFINITY
    };
    let mut rows = pnt_from_orbits(&orbits, h_t, lambda_max, shells)?;
    rows.retain(|r| r.lambda < exact_limit);
    Ok(PntReport {
        h_t,
        n_max,
        rows,
        truncated,
    })
}

pub fn pnt_from_orbits(orbits: &[OrbitRecord], h_t: f64, lambda_max: f64, shells: usize) -> Result<Vec<PntRow>> {
    let mut periods: Vec<f64> = orbits.iter().map(|o| o.period).collect();
    periods.sort_by(f64::total_cmp);
    (1..=shells)
        .map(|j| {
            let lambda = lambda_max * j as f64 / shells as f64;
            let pi = periods.partition_point(|&p| p <= lambda) as u64;
            let x = (h_t * lambda).exp();
            let li = if x >= 2.0 { li(x)? } else { 0.0 };
            let ratio = if li > 0.0 { pi as f64 / li } else { f64::NAN };
            Ok(PntRow { lambda, pi, li, ratio })
        })
        .collect()
}
