//! Real transfer operators on depth-k locally constant functions.
//!
//! At depth `k` the operator `(L_g h)(x) = Σ_{σy=x} e^{g(y)} h(y)` is a sparse
//! matrix: row `u` has one entry per admissible preimage `w = i·u₀…u_{k-2}`,
//! and the entry is `e^{g(w)}`. The column weight depends on `w` only, so the
//! matrix is stored as a shared sparsity pattern plus one weight per block.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, DENSE_LIMIT};
use crate::models::SuspensionModel;
use crate::potential::{CylinderMeasure, LocallyConstantFn, RealFn, Scalar};
use crate::sft::BlockIndex;

/// Relative residual demanded of eigen-identities.
pub const EIGEN_TOL: f64 = 1e-12;

/// Transfer matrix at one block depth.
#[derive(Clone, Debug)]
pub struct TransferMatrix<T: Scalar> {
    index: Arc<BlockIndex>,
    pattern: Arc<Vec<Vec<usize>>>,
    weights: Vec<T>,
}

pub type ComplexMatrix = TransferMatrix<Complex64>;

/// Preimage columns of each row: `w = i·u[..k-1]` with `A[i][u₀]`.
pub fn preimage_pattern(index: &BlockIndex) -> Vec<Vec<usize>> {
    let sys = index.system();
    let k = index.depth();
    index
        .words()
        .iter()
        .map(|u| {
            let mut w = Vec::with_capacity(k);
            (0..sys.alphabet_size() as u8)
                .filter(|&i| sys.allowed(i, u[0]))
                .map(|i| {
                    w.clear();
                    w.push(i);
                    w.extend_from_slice(&u[..k - 1]);
                    index.find(&w).expect("preimage block is admissible")
                })
                .collect()
        })
        .collect()
}

impl<T: Scalar> TransferMatrix<T> {
    /// Matrix of `L_g` at depth `k`, with column weights `e^{g(w)}`.
    pub fn assemble(g: &LocallyConstantFn<T>, k: usize) -> Result<Self> {
        if k < g.depth() {
            return Err(Error::invalid(format!(
                "block depth {k} is below the potential depth {}",
                g.depth()
            )));
        }
        let index = if k == g.depth() {
            g.index().clone()
        } else {
            BlockIndex::new(g.system().clone(), k)?
        };
        let g = g.refine_onto(&index);
        let pattern = Arc::new(preimage_pattern(&index));
        let weights = g.values().iter().map(|&v| v.exp()).collect();
        Ok(Self { index, pattern, weights })
    }

    /// Same sparsity pattern with new column weights.
    pub fn with_weights<U: Scalar>(&self, weights: Vec<U>) -> TransferMatrix<U> {
        assert_eq!(weights.len(), self.index.len());
        TransferMatrix {
            index: self.index.clone(),
            pattern: self.pattern.clone(),
            weights,
        }
    }

    pub fn block_depth(&self) -> usize {
        self.index.depth()
    }

    pub fn index(&self) -> &Arc<BlockIndex> {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn row(&self, u: usize) -> &[usize] {
        &self.pattern[u]
    }

    pub fn entry(&self, u: usize, w: usize) -> T {
        if self.pattern[u].contains(&w) {
            self.weights[w]
        } else {
            T::ZERO
        }
    }

    /// `(Lh)(u) = Σ_w M(u,w) h(w)`.
    pub fn apply(&self, h: &[T]) -> Vec<T> {
        self.pattern
            .iter()
            .map(|row| row.iter().fold(T::ZERO, |acc, &w| acc + self.weights[w] * h[w]))
            .collect()
    }

    /// `(νM)(w) = Σ_u ν(u) M(u,w)`.
    pub fn apply_adjoint(&self, nu: &[T]) -> Vec<T> {
        let mut out = vec![T::ZERO; self.len()];
        for (u, row) in self.pattern.iter().enumerate() {
            for &w in row {
                out[w] = out[w] + nu[u] * self.weights[w];
            }
        }
        out
    }

    pub fn apply_fn(&self, h: &LocallyConstantFn<T>) -> Result<LocallyConstantFn<T>> {
        if h.depth() > self.block_depth() {
            return Err(Error::invalid(format!(
                "function of depth {} exceeds block depth {}",
                h.depth(),
                self.block_depth()
            )));
        }
        let h = h.refine_onto(&self.index);
        LocallyConstantFn::from_values(self.index.clone(), self.apply(h.values()))
    }

    /// `Mᵐ h`.
    pub fn apply_power(&self, h: &[T], m: usize) -> Vec<T> {
        let mut v = h.to_vec();
        for _ in 0..m {
            v = self.apply(&v);
        }
        v
    }

    pub fn row_sums(&self) -> Vec<T> {
        self.apply(&vec![T::from_real(1.0); self.len()])
    }

    /// Entrywise modulus, a real matrix with the same pattern.
    pub fn modulus(&self) -> TransferMatrix<f64> {
        self.with_weights(self.weights.iter().map(|w| w.modulus()).collect())
    }
}

/// RPF triple of a nonnegative transfer matrix.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub lambda: f64,
    pub pressure: f64,
    /// Positive right eigenvector, normalized by `Σ h ν̂ = 1`.
    pub eigenfunction: RealFn,
    /// Left eigenvector as a probability table over depth-k words.
    pub eigenmeasure: RealFn,
    pub right_residual: f64,
    pub left_residual: f64,
}

pub fn assemble_matrix(g: &RealFn, k: usize) -> Result<TransferMatrix<f64>> {
    if k == 1 && !g.system().is_full_shift() && g.depth() == 1 {
        log::debug!("depth-1 matrix on a non-full shift: image is not depth-0 reducible");
    }
    TransferMatrix::assemble(g, k)
}

fn dense_f64(m: &TransferMatrix<f64>) -> DMatrix<f64> {
    let n = m.len();
    let mut d = DMatrix::zeros(n, n);
    for u in 0..n {
        for &w in m.row(u) {
            d[(u, w)] = m.weights[w];
        }
    }
    d
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

fn relative_residual(mv: &[f64], v: &[f64], lambda: f64) -> f64 {
    let r = mv
        .iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).abs())
        .fold(0.0, f64::max);
    r / (lambda.abs() * max_abs(v)).max(f64::MIN_POSITIVE)
}

/// Perron eigendata with `Σ ν̂ = 1` and `Σ h ν̂ = 1`.
pub fn rpf_data(m: &TransferMatrix<f64>) -> Result<SpectralData> {
    if !m.index.system().is_irreducible() {
        return Err(Error::Reducible);
    }
    let n = m.len();
    let (lambda, mut h, mut nu) = if n <= DENSE_LIMIT {
        let d = dense_f64(m);
        let lambda = linalg::perron_root(&d);
        let h = linalg::eigenvector_for(&d, lambda)?;
        let nu = linalg::eigenvector_for(&d.transpose(), lambda)?;
        (lambda, h.iter().copied().collect::<Vec<f64>>(), nu.iter().copied().collect::<Vec<f64>>())
    } else {
        let (lambda, h) = linalg::power_iteration(|x| m.apply(x), n, 1e-13, 100_000)?;
        let (_, nu) = linalg::power_iteration(|x| m.apply_adjoint(x), n, 1e-13, 100_000)?;
        (lambda, h, nu)
    };
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= s);
    let hs: f64 = h.iter().zip(&nu).map(|(a, b)| a * b).sum();
    h.iter_mut().for_each(|x| *x /= hs);
    if h.iter().chain(&nu).any(|&x| !(x > 0.0)) {
        return Err(Error::numerical("Perron vectors are not strictly positive"));
    }
    let right_residual = relative_residual(&m.apply(&h), &h, lambda);
    let left_residual = relative_residual(&m.apply_adjoint(&nu), &nu, lambda);
    let residual = right_residual.max(left_residual);
    if residual > EIGEN_TOL {
        return Err(Error::NonConvergence { residual });
    }
    Ok(SpectralData {
        lambda,
        pressure: lambda.ln(),
        eigenfunction: RealFn::from_values(m.index.clone(), h)?,
        eigenmeasure: RealFn::from_values(m.index.clone(), nu)?,
        right_residual,
        left_residual,
    })
}

/// Perron root without eigenvectors.
fn perron_root(m: &TransferMatrix<f64>) -> Result<f64> {
    if m.len() <= DENSE_LIMIT {
        Ok(linalg::perron_root(&dense_f64(m)))
    } else {
        Ok(linalg::power_iteration(|x| m.apply(x), m.len(), 1e-13, 100_000)?.0)
    }
}

/// `Pr_σ(g) = log λ` at depth `depth(g)`.
pub fn pressure(g: &RealFn) -> Result<f64> {
    if !g.system().is_irreducible() {
        return Err(Error::Reducible);
    }
    Ok(perron_root(&TransferMatrix::assemble(g, g.depth())?)?.ln())
}

/// Root of a continuous decreasing function bracketed by `[lo, hi]`.
///
/// Brent's method; stops when `|f| ≤ ftol` or the bracket shrinks below
/// a few ulps.
pub(crate) fn brent_root(
    f: impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    ftol: f64,
) -> Result<(f64, f64)> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok((a, 0.0));
    }
    if fb == 0.0 {
        return Ok((b, 0.0));
    }
    if fa.signum() == fb.signum() {
        return Err(Error::numerical("root is not bracketed"));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 1e-300;
        let m = 0.5 * (c - b);
        if fb.abs() <= ftol || m.abs() <= tol {
            return Ok((b, fb));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok((b, fb))
}

/// Pressure of `f - sτ` on a common block index.
pub(crate) struct PressureCurve {
    pattern_matrix: TransferMatrix<f64>,
    f: Vec<f64>,
    tau: Vec<f64>,
}

impl PressureCurve {
    pub(crate) fn new(f: &RealFn, tau: &RealFn) -> Result<Self> {
        if f.system() != tau.system() {
            return Err(Error::invalid("potential and roof live on different systems"));
        }
        if !f.system().is_irreducible() {
            return Err(Error::Reducible);
        }
        let k = f.depth().max(tau.depth());
        let zero = RealFn::zero(f.system(), k)?;
        let pattern_matrix = TransferMatrix::assemble(&zero, k)?;
        let idx = pattern_matrix.index().clone();
        Ok(Self {
            f: f.refine_onto(&idx).into_values(),
            tau: tau.refine_onto(&idx).into_values(),
            pattern_matrix,
        })
    }

    pub(crate) fn at(&self, s: f64) -> Result<f64> {
        let w = self.f.iter().zip(&self.tau).map(|(f, t)| (f - s * t).exp()).collect();
        Ok(perron_root(&self.pattern_matrix.with_weights(w))?.ln())
    }

    /// Root of `s ↦ Pr(f - sτ)`.
    pub(crate) fn root(&self, tol: f64) -> Result<f64> {
        let tmin = self.tau.iter().copied().fold(f64::INFINITY, f64::min);
        let tmax = self.tau.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(tmin > 0.0) {
            return Err(Error::invalid(format!("roof must be positive, min is {tmin}")));
        }
        let p0 = self.at(0.0)?;
        let mut lo = p0 / tmax - 1.0;
        let mut hi = p0 / tmin + 1.0;
        let mut widen = 1.0;
        while self.at(lo)? <= 0.0 {
            lo -= widen;
            widen *= 2.0;
            if widen > 1e12 {
                return Err(Error::numerical("cannot bracket pressure root from below"));
            }
        }
        widen = 1.0;
        while self.at(hi)? >= 0.0 {
            hi += widen;
            widen *= 2.0;
            if widen > 1e12 {
                return Err(Error::numerical("cannot bracket pressure root from above"));
            }
        }
        let (s, r) = brent_root(|s| self.at(s), lo, hi, tol)?;
        if r.abs() > tol.max(1e-15) && r.abs() > 10.0 * f64::EPSILON * tmax * s.abs().max(1.0) {
            return Err(Error::NonConvergence { residual: r.abs() });
        }
        Ok(s)
    }
}

/// The unique `s` with `Pr_σ(f - sτ) = 0`.
pub fn solve_p_f(f: &RealFn, tau: &RealFn, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    PressureCurve::new(f, tau)?.root(tol)
}

/// Normalized potential `f^(a)` and the RPF data it came from.
#[derive(Clone, Debug)]
pub struct NormalizedPotential {
    pub a: f64,
    pub p_f: f64,
    /// `f^(a) = f - (P_f+a)τ + ln h - ln h∘σ - ln λ`.
    pub fa: RealFn,
    /// RPF data of `L_{f-(P_f+a)τ}` at the same depth.
    pub spectral: SpectralData,
    /// `max_u |(M_a 1)(u) - 1|`.
    pub stochastic_residual: f64,
}

impl NormalizedPotential {
    pub fn depth(&self) -> usize {
        self.fa.depth()
    }

    /// `M_a = L_{f^(a)}` at block depth `k ≥ depth(f^(a))`.
    pub fn matrix(&self, k: usize) -> Result<TransferMatrix<f64>> {
        TransferMatrix::assemble(&self.fa, k)
    }
}

/// Normalizes at a given pressure root, working depth `k`.
pub fn normalize_with(
    f: &RealFn,
    tau: &RealFn,
    p_f: f64,
    a: f64,
    k: usize,
) -> Result<NormalizedPotential> {
    let idx = BlockIndex::new(f.system().clone(), k)?;
    let g = f.zip_with(tau, |x, t| x - (p_f + a) * t)?.refine_onto(&idx);
    let m = TransferMatrix::assemble(&g, k)?;
    let spectral = rpf_data(&m)?;
    let h = spectral.eigenfunction.values();
    let ln_lambda = spectral.lambda.ln();
    let vals: Vec<f64> = idx
        .words()
        .iter()
        .zip(g.values())
        .zip(h)
        .map(|((w, &gw), &hw)| {
            // h is (k-1)-reducible, so h(σw) is h at any block extending w[1..]
            let hs = h[idx.prefix_range(&w[1..]).start];
            gw + (hw / hs).ln() - ln_lambda
        })
        .collect();
    let fa = RealFn::from_values(idx, vals)?;
    let sums = TransferMatrix::assemble(&fa, k)?.row_sums();
    let stochastic_residual = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    if stochastic_residual > EIGEN_TOL {
        return Err(Error::numerical(format!(
            "normalized matrix is not stochastic (residual {stochastic_residual:.3e})"
        )));
    }
    Ok(NormalizedPotential {
        a,
        p_f,
        fa,
        spectral,
        stochastic_residual,
    })
}

/// `f^(a)` for a model at its working depth.
pub fn normalize(model: &SuspensionModel, a: f64, tol: f64) -> Result<NormalizedPotential> {
    let p_f = solve_p_f(&model.potential, &model.roof, tol)?;
    normalize_with(&model.potential, &model.roof, p_f, a, model.work_depth())
}

/// Invariant probability `ν = h ν̂` of the normalized chain.
#[derive(Clone, Debug)]
pub struct GibbsMeasure {
    /// Normalized potential `f^(0)`, the generator of the measure.
    pub f0: RealFn,
    /// `g = f - P_f τ`, the potential the Gibbs certificate refers to.
    pub g: RealFn,
    /// Masses at the generator depth.
    pub base: RealFn,
    /// Masses at the requested output depth.
    pub masses: RealFn,
    pub c1: f64,
    pub c2: f64,
}

impl GibbsMeasure {
    pub fn block_depth(&self) -> usize {
        self.masses.depth()
    }

    /// `ν[w]` for a word of any length.
    pub fn mass_of(&self, w: &[u8]) -> f64 {
        let sys = self.f0.system();
        if !sys.is_admissible(w) {
            return 0.0;
        }
        if w.len() <= self.masses.depth() {
            let r = self.masses.index().prefix_range(w);
            return self.masses.values()[r].iter().sum();
        }
        let k = self.f0.depth();
        let mut acc = self.f0.eval_unchecked(&w[..k]);
        let n = w.len();
        let d = self.masses.depth();
        for j in 1..(n - d) {
            acc += self.f0.eval_unchecked(&w[j..j + k]);
        }
        acc.exp() * self.masses.eval_unchecked(&w[n - d..])
    }

    /// Masses at any depth at least the generator depth.
    pub fn masses_at(&self, depth: usize) -> Result<RealFn> {
        if depth == self.masses.depth() {
            return Ok(self.masses.clone());
        }
        extend_masses(&self.f0, &self.base, depth)
    }
}

impl CylinderMeasure for GibbsMeasure {
    fn mass(&self, w: &[u8]) -> f64 {
        self.mass_of(w)
    }
}

/// `ν[x] = e^{f0(x₀…x_{k-1})} ν[x₁…]` level by level.
fn extend_masses(f0: &RealFn, base: &RealFn, depth: usize) -> Result<RealFn> {
    let k = f0.depth();
    if depth < k {
        let idx = BlockIndex::new(base.system().clone(), depth)?;
        return Ok(RealFn::on_index(&idx, |w| {
            base.values()[base.index().prefix_range(w)].iter().sum()
        }));
    }
    let mut cur = base.clone();
    for n in (k + 1)..=depth {
        let idx = BlockIndex::new(base.system().clone(), n)?;
        let prev = &cur;
        cur = RealFn::on_index(&idx, |w| f0.eval_unchecked(w).exp() * prev.eval_unchecked(&w[1..]));
    }
    Ok(cur)
}

/// Gibbs measure of a model, tabulated at `depth_out`, with its `(c1, c2)` certificate.
pub fn gibbs_measure(model: &SuspensionModel, depth_out: usize, tol: f64) -> Result<GibbsMeasure> {
    let norm = normalize(model, 0.0, tol)?;
    gibbs_from_normalized(&model.potential, &model.roof, &norm, depth_out)
}

pub fn gibbs_from_normalized(
    f: &RealFn,
    tau: &RealFn,
    norm: &NormalizedPotential,
    depth_out: usize,
) -> Result<GibbsMeasure> {
    let k = norm.depth();
    if depth_out < k {
        return Err(Error::invalid(format!(
            "output depth {depth_out} is below the generator depth {k}"
        )));
    }
    let h = norm.spectral.eigenfunction.values();
    let nu_hat = norm.spectral.eigenmeasure.values();
    let mut base: Vec<f64> = h.iter().zip(nu_hat).map(|(a, b)| a * b).collect();
    let s: f64 = base.iter().sum();
    base.iter_mut().for_each(|x| *x /= s);
    let base = RealFn::from_values(norm.fa.index().clone(), base)?;
    let masses = extend_masses(&norm.fa, &base, depth_out)?;
    let g = f.zip_with(tau, |x, t| x - norm.p_f * t)?;
    let (c1, c2) = gibbs_constants(&g, &masses)?;
    Ok(GibbsMeasure {
        f0: norm.fa.clone(),
        g,
        base,
        masses,
        c1,
        c2,
    })
}

/// Extremes of `ν(C)/e^{g_m(y)}` over cylinders `C` of length `m` and
/// `y ∈ C`, for every `m` whose Birkhoff sum fits in the tabulated depth.
fn gibbs_constants(g: &RealFn, masses: &RealFn) -> Result<(f64, f64)> {
    let d = g.depth();
    let n = masses.depth();
    let words = masses.index().words();
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    if n < d {
        return Ok((f64::NAN, f64::NAN));
    }
    for m in 1..=(n + 1 - d) {
        let ext = m + d - 1;
        for w in words {
            let y = &w[..ext];
            let cyl: f64 = masses.values()[masses.index().prefix_range(&y[..m])].iter().sum();
            let ratio = cyl / g.birkhoff_unchecked(y, m).exp();
            c1 = c1.min(ratio);
            c2 = c2.max(ratio);
        }
    }
    Ok((c1, c2))
}

/// `Σ_w ν(w) h(w)`.
pub fn integrate(nu: &GibbsMeasure, h: &RealFn) -> Result<f64> {
    integrate_generic(nu, h)
}

pub fn integrate_generic<T: Scalar>(nu: &GibbsMeasure, h: &LocallyConstantFn<T>) -> Result<T> {
    let masses = if h.depth() <= nu.block_depth() {
        nu.masses.clone()
    } else {
        nu.masses_at(h.depth())?
    };
    let h = h.refine_onto(masses.index());
    Ok(h
        .values()
        .iter()
        .zip(masses.values())
        .fold(T::ZERO, |acc, (&v, &m)| acc + v.scale(m)))
}

/// Decay of `‖L^n_{f^(0)} w - ∫ w dν‖₀` and its geometric rate.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub distances: Vec<f64>,
    pub integral: f64,
    pub fitted_rate: f64,
    /// `|λ₂|` of the normalized matrix at the same depth, when computed densely.
    pub second_modulus: Option<f64>,
}

pub fn rpf_convergence_rate(
    model: &SuspensionModel,
    w: &RealFn,
    n_max: usize,
    tol: f64,
) -> Result<ConvergenceReport> {
    if n_max < 4 {
        return Err(Error::invalid("n_max must be at least 4"));
    }
    let norm = normalize(model, 0.0, tol)?;
    let depth = norm.depth().max(w.depth());
    let nu = gibbs_from_normalized(&model.potential, &model.roof, &norm, depth)?;
    let m = norm.matrix(depth)?;
    let integral = integrate(&nu, w)?;
    let mut v = w.refine_onto(m.index()).into_values();
    let mut distances = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            v = m.apply(&v);
        }
        distances.push(v.iter().map(|x| (x - integral).abs()).fold(0.0, f64::max));
    }
    let second_modulus = (m.len() <= DENSE_LIMIT).then(|| {
        let ev = linalg::spectrum_real(&dense_f64(&m));
        ev.get(1).map_or(0.0, |z| z.norm())
    });
    let fitted_rate = fit_geometric_rate(&distances);
    Ok(ConvergenceReport {
        distances,
        integral,
        fitted_rate,
        second_modulus,
    })
}

/// Least-squares rate of a geometrically decaying sequence.
///
/// Uses the tail half of the entries above the round-off floor; returns 0
/// when the sequence vanishes after the first step.
pub fn fit_geometric_rate(d: &[f64]) -> f64 {
    let scale = d.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let floor = 1e-13 * scale;
    let live: Vec<(f64, f64)> = d
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &x)| x > floor)
        .map(|(n, &x)| (n as f64, x.ln()))
        .collect();
    if live.len() < 2 {
        return 0.0;
    }
    let half = d.len() / 2;
    let tail: Vec<(f64, f64)> = live.iter().copied().filter(|&(n, _)| n >= half as f64).collect();
    let pts = if tail.len() >= 2 { tail } else { live };
    log_linear_slope(&pts).exp()
}

pub(crate) fn log_linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Dense copy of a real matrix, for callers needing the full spectrum.
pub fn dense_real(m: &TransferMatrix<f64>) -> DMatrix<f64> {
    dense_f64(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::preset;
    use crate::sft::{SymbolicSystem, Word};

    fn full2() -> Arc<SymbolicSystem> {
        Arc::new(SymbolicSystem::full_shift(2).unwrap())
    }

    fn dense(m: &TransferMatrix<f64>) -> Vec<Vec<f64>> {
        let d = dense_f64(m);
        (0..d.nrows()).map(|i| d.row(i).iter().copied().collect()).collect()
    }

    #[test]
    fn assembled_matrices() {
        let z = RealFn::zero(&full2(), 1).unwrap();
        assert_eq!(dense(&assemble_matrix(&z, 1).unwrap()), vec![vec![1.0, 1.0]; 2]);
        let gm = Arc::new(SymbolicSystem::golden_mean());
        let z = RealFn::zero(&gm, 1).unwrap();
        assert_eq!(dense(&assemble_matrix(&z, 1).unwrap()), vec![vec![1.0, 1.0], vec![1.0, 0.0]]);
        let one = Arc::new(SymbolicSystem::full_shift(1).unwrap());
        let c = RealFn::constant(&one, 1, 0.7).unwrap();
        assert_eq!(dense(&assemble_matrix(&c, 1).unwrap()), vec![vec![0.7f64.exp()]]);
        let d2 = RealFn::zero(&full2(), 2).unwrap();
        assert!(assemble_matrix(&d2, 1).is_err());
    }

    #[test]
    fn rpf_examples() {
        let z = RealFn::zero(&full2(), 1).unwrap();
        let s = rpf_data(&assemble_matrix(&z, 1).unwrap()).unwrap();
        assert!((s.lambda - 2.0).abs() < 1e-14);
        assert!(s.eigenfunction.values().iter().all(|&h| (h - 1.0).abs() < 1e-14));
        assert!(s.eigenmeasure.values().iter().all(|&v| (v - 0.5).abs() < 1e-14));
        let gm = Arc::new(SymbolicSystem::golden_mean());
        let s = rpf_data(&assemble_matrix(&RealFn::zero(&gm, 1).unwrap(), 1).unwrap()).unwrap();
        assert!((s.lambda - 1.618_033_988_749_895).abs() < 1e-13);
        let red = Arc::new(SymbolicSystem::from_01(&[vec![1, 1], vec![0, 1]]).unwrap());
        let err = rpf_data(&assemble_matrix(&RealFn::zero(&red, 1).unwrap(), 1).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "RPF requires irreducibility");
    }

    #[test]
    fn pressure_examples() {
        assert!((pressure(&RealFn::zero(&full2(), 1).unwrap()).unwrap() - 2f64.ln()).abs() < 1e-14);
        let c = RealFn::constant(&full2(), 1, -0.3).unwrap();
        assert!((pressure(&c).unwrap() - (2f64.ln() - 0.3)).abs() < 1e-14);
    }

    #[test]
    fn p_f_examples() {
        let sys = full2();
        let z = RealFn::zero(&sys, 1).unwrap();
        let one = RealFn::constant(&sys, 1, 1.0).unwrap();
        let two = RealFn::constant(&sys, 1, 2.0).unwrap();
        assert!((solve_p_f(&z, &one, 1e-14).unwrap() - 2f64.ln()).abs() < 1e-13);
        assert!((solve_p_f(&z, &two, 1e-14).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-13);
        let neg = RealFn::from_fn(&sys, 1, |w| w[0] as f64 - 0.5).unwrap();
        assert!(solve_p_f(&z, &neg, 1e-12).is_err());
    }

    #[test]
    fn normalize_examples() {
        let m = preset("full2-const").unwrap();
        let n = normalize(&m, 0.0, 1e-14).unwrap();
        assert!(n.fa.values().iter().all(|&v| (v + 2f64.ln()).abs() < 1e-13));
        let gm = preset("golden-mean-const").unwrap();
        let n = normalize(&gm, 0.0, 1e-14).unwrap();
        assert_eq!(n.depth(), 2);
        for s in n.matrix(2).unwrap().row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gibbs_examples() {
        let m = preset("full2-const").unwrap();
        let nu = gibbs_measure(&m, 3, 1e-14).unwrap();
        assert!(nu.masses.values().iter().all(|&x| (x - 0.125).abs() < 1e-14));
        let gm = preset("golden-mean-const").unwrap();
        let nu = gibbs_measure(&gm, 4, 1e-14).unwrap();
        let phi: f64 = (1.0 + 5f64.sqrt()) / 2.0;
        let p0 = nu.mass_of(&[0]);
        assert!((p0 - phi * phi / (1.0 + phi * phi)).abs() < 1e-12);
        assert_eq!(nu.mass_of(&[0, 1]) + nu.mass_of(&[0, 0]), p0);
        assert!(nu.c1 > 0.0 && nu.c1 <= nu.c2);
    }

    #[test]
    fn deep_masses_agree_with_table() {
        let m = preset("full2-nonlattice").unwrap();
        let nu = gibbs_measure(&m, 4, 1e-14).unwrap();
        let deep = nu.masses_at(7).unwrap();
        for w in deep.index().words() {
            let a = nu.mass_of(w);
            let b = deep.eval_unchecked(w);
            assert!((a - b).abs() <= 1e-15 * b.max(1e-300) * 10.0);
        }
    }

    #[test]
    fn integrate_examples() {
        let m = preset("full2-const").unwrap();
        let nu = gibbs_measure(&m, 2, 1e-14).unwrap();
        let one = RealFn::constant(&m.system, 1, 1.0).unwrap();
        assert!((integrate(&nu, &one).unwrap() - 1.0).abs() < 1e-15);
        let h = RealFn::from_fn(&m.system, 1, |w| w[0] as f64).unwrap();
        assert!((integrate(&nu, &h).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn convergence_examples() {
        let m = preset("full2-const").unwrap();
        let w = RealFn::from_fn(&m.system, 1, |w| w[0] as f64).unwrap();
        let r = rpf_convergence_rate(&m, &w, 6, 1e-14).unwrap();
        assert!(r.distances[1] < 1e-14);
        assert_eq!(r.fitted_rate, 0.0);
        let gm = preset("golden-mean-const").unwrap();
        let w = RealFn::from_fn(&gm.system, 1, |w| 1.0 + w[0] as f64).unwrap();
        let r = rpf_convergence_rate(&gm, &w, 20, 1e-14).unwrap();
        let target = 1.0 / (1.618_033_988_749_895f64 * 1.618_033_988_749_895);
        assert!((r.fitted_rate - target).abs() < 0.05 * target, "{}", r.fitted_rate);
        assert!((r.second_modulus.unwrap() - target).abs() < 1e-10);
        let one = RealFn::constant(&gm.system, 1, 1.0).unwrap();
        let r = rpf_convergence_rate(&gm, &one, 5, 1e-14).unwrap();
        assert!(r.distances.iter().all(|&d| d < 1e-14));
    }

    #[test]
    fn words_print_in_lex_order() {
        let gm = Arc::new(SymbolicSystem::golden_mean());
        let idx = BlockIndex::new(gm, 2).unwrap();
        let names: Vec<String> = idx.words().iter().map(|w| Word::from(w.as_slice()).to_string()).collect();
        assert_eq!(names, ["00", "01", "10"]);
    }
}
