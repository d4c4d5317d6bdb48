//! Locally constant functions: potentials, roofs and observables.
//!
//! A depth-`k` function is a table over the admissible depth-`k` words, in
//! lexicographic order. It is evaluated on any word of length at least `k`
//! by looking up the length-`k` prefix.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sft::{common_prefix, BlockIndex, SymbolicSystem, Theta, Word};

/// Real or complex field element stored in a [`LocallyConstantFn`].
pub trait Scalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const ZERO: Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn scale(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn conj(self) -> Self;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn conj(self) -> Self {
        self
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
}

/// Function of the first `depth` symbols.
#[derive(Clone, Debug)]
pub struct LocallyConstantFn<T: Scalar> {
    index: Arc<BlockIndex>,
    values: Vec<T>,
}

pub type RealFn = LocallyConstantFn<f64>;
pub type ComplexFn = LocallyConstantFn<Complex64>;

impl<T: Scalar> LocallyConstantFn<T> {
    pub fn from_values(index: Arc<BlockIndex>, values: Vec<T>) -> Result<Self> {
        if values.len() != index.len() {
            return Err(Error::invalid(format!(
                "depth-{} table needs {} values, got {}",
                index.depth(),
                index.len(),
                values.len()
            )));
        }
        Ok(Self { index, values })
    }

    pub fn constant(system: &Arc<SymbolicSystem>, depth: usize, c: T) -> Result<Self> {
        let index = BlockIndex::new(system.clone(), depth)?;
        let values = vec![c; index.len()];
        Ok(Self { index, values })
    }

    pub fn zero(system: &Arc<SymbolicSystem>, depth: usize) -> Result<Self> {
        Self::constant(system, depth, T::ZERO)
    }

    /// Tabulates `f` on the admissible depth-`depth` words.
    pub fn from_fn(
        system: &Arc<SymbolicSystem>,
        depth: usize,
        f: impl Fn(&[u8]) -> T,
    ) -> Result<Self> {
        let index = BlockIndex::new(system.clone(), depth)?;
        let values = index.words().iter().map(|w| f(w)).collect();
        Ok(Self { index, values })
    }

    pub fn on_index(index: &Arc<BlockIndex>, f: impl Fn(&[u8]) -> T) -> Self {
        let values = index.words().iter().map(|w| f(w)).collect();
        Self {
            index: index.clone(),
            values,
        }
    }

    pub fn depth(&self) -> usize {
        self.index.depth()
    }

    pub fn index(&self) -> &Arc<BlockIndex> {
        &self.index
    }

    pub fn system(&self) -> &Arc<SymbolicSystem> {
        self.index.system()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Value at the depth-`k` prefix of `w`.
    pub fn evaluate(&self, w: &[u8]) -> Result<T> {
        if w.len() < self.depth() {
            return Err(Error::invalid(format!(
                "word of length {} is shorter than depth {}",
                w.len(),
                self.depth()
            )));
        }
        if !self.system().is_admissible(w) {
            return Err(Error::invalid(format!("word {} is not admissible", Word::from(w))));
        }
        Ok(self.eval_unchecked(w))
    }

    /// Lookup without validation; `w` must be admissible and long enough.
    #[inline]
    pub(crate) fn eval_unchecked(&self, w: &[u8]) -> T {
        self.values[self.index.find(w).expect("admissible block")]
    }

    /// `Σ_{j<m} fn(σʲ w)`.
    pub fn birkhoff_sum(&self, w: &[u8], m: usize) -> Result<T> {
        if m == 0 {
            return Ok(T::ZERO);
        }
        let need = m + self.depth() - 1;
        if w.len() < need {
            return Err(Error::invalid(format!(
                "Birkhoff sum of length {m} at depth {} needs {need} symbols, got {}",
                self.depth(),
                w.len()
            )));
        }
        if !self.system().is_admissible(w) {
            return Err(Error::invalid(format!("word {} is not admissible", Word::from(w))));
        }
        Ok(self.birkhoff_unchecked(w, m))
    }

    pub(crate) fn birkhoff_unchecked(&self, w: &[u8], m: usize) -> T {
        (0..m).fold(T::ZERO, |acc, j| acc + self.eval_unchecked(&w[j..]))
    }

    /// Same function tabulated at a larger depth.
    pub fn refine(&self, k2: usize) -> Result<Self> {
        if k2 < self.depth() {
            return Err(Error::invalid(format!(
                "cannot refine depth {} down to {k2}",
                self.depth()
            )));
        }
        if k2 == self.depth() {
            return Ok(self.clone());
        }
        let index = BlockIndex::new(self.system().clone(), k2)?;
        Ok(self.refine_onto(&index))
    }

    pub(crate) fn refine_onto(&self, index: &Arc<BlockIndex>) -> Self {
        debug_assert!(index.depth() >= self.depth());
        if Arc::ptr_eq(index, &self.index) {
            return self.clone();
        }
        Self::on_index(index, |w| self.eval_unchecked(w))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> LocallyConstantFn<U> {
        LocallyConstantFn {
            index: self.index.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination on a common refinement.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.system() != other.system() {
            return Err(Error::invalid("functions live on different systems"));
        }
        let (a, b) = if self.depth() >= other.depth() {
            (self.clone(), other.refine_onto(&self.index))
        } else {
            (self.refine_onto(&other.index), other.clone())
        };
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect();
        Ok(Self {
            index: a.index,
            values,
        })
    }

    /// `‖h‖₀`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    /// `|h|_θ = max |h(w) - h(w')| / D_θ(w, w')` over admissible depth-k words.
    pub fn theta_seminorm(&self, theta: Theta) -> f64 {
        let words = self.index.words();
        let mut best = 0.0f64;
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                let diff = (self.values[i] - self.values[j]).modulus();
                if diff == 0.0 {
                    continue;
                }
                let n = common_prefix(&words[i], &words[j]);
                best = best.max(diff / theta.pow(n));
            }
        }
        best
    }

    /// `‖h‖_{θ,b} = ‖h‖₀ + |h|_θ / |b|`, defined for `|b| ≥ 1`.
    pub fn norm_theta_b(&self, theta: Theta, b: f64) -> Result<NormReport> {
        if !(b.abs() >= 1.0) {
            return Err(Error::invalid(format!("norm_theta_b needs |b| >= 1, got {b}")));
        }
        let sup_norm = self.sup_norm();
        let theta_seminorm = self.theta_seminorm(theta);
        Ok(NormReport {
            sup_norm,
            theta_seminorm,
            theta_b_norm: sup_norm + theta_seminorm / b.abs(),
            b,
        })
    }

    /// True when the table factors through prefixes of length `p`.
    pub fn is_reducible_to(&self, p: usize) -> bool {
        let words = self.index.words();
        let mut i = 0;
        while i < words.len() {
            let r = self.index.prefix_range(&words[i][..p.min(words[i].len())]);
            if self.values[r.clone()].iter().any(|&v| v != self.values[r.start]) {
                return false;
            }
            i = r.end;
        }
        true
    }
}

impl LocallyConstantFn<f64> {
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_complex(&self) -> ComplexFn {
        self.map(Complex64::from_real)
    }

    /// Conditional average over depth-`p` cylinders under `nu`.
    ///
    /// Cylinders of zero mass fall back to the arithmetic mean and are listed
    /// in the result.
    pub fn approximate_by_depth(
        &self,
        p: usize,
        nu: &dyn CylinderMeasure,
        theta: Theta,
    ) -> Result<DepthApproximation> {
        if p == 0 || p >= self.depth() {
            return Err(Error::invalid(format!(
                "approximation depth must lie in 1..{}, got {p}",
                self.depth()
            )));
        }
        let coarse = BlockIndex::new(self.system().clone(), p)?;
        let mut values = Vec::with_capacity(coarse.len());
        let mut zero_mass = Vec::new();
        for c in coarse.words() {
            let r = self.index.prefix_range(c);
            let mut mass = 0.0;
            let mut acc = 0.0;
            for i in r.clone() {
                let m = nu.mass(self.index.word(i));
                mass += m;
                acc += m * self.values[i];
            }
            if mass > 0.0 {
                values.push(acc / mass);
            } else {
                zero_mass.push(Word::from(c.as_slice()));
                values.push(self.values[r.clone()].iter().sum::<f64>() / r.len() as f64);
            }
        }
        let approx = LocallyConstantFn::from_values(coarse, values)?;
        let sup_error = self
            .index
            .words()
            .iter()
            .zip(&self.values)
            .map(|(w, &v)| (v - approx.eval_unchecked(w)).abs())
            .fold(0.0, f64::max);
        let bound = self.theta_seminorm(theta) * theta.pow(p);
        Ok(DepthApproximation {
            approx,
            sup_error,
            bound,
            zero_mass_cylinders: zero_mass,
        })
    }
}

/// Masses of cylinders, as needed by conditional averaging.
pub trait CylinderMeasure {
    fn mass(&self, w: &[u8]) -> f64;
}

impl<F: Fn(&[u8]) -> f64> CylinderMeasure for F {
    fn mass(&self, w: &[u8]) -> f64 {
        self(w)
    }
}

#[derive(Clone, Debug)]
pub struct DepthApproximation {
    pub approx: RealFn,
    pub sup_error: f64,
    /// `|fn|_θ θᵖ`, which always dominates `sup_error`.
    pub bound: f64,
    pub zero_mass_cylinders: Vec<Word>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub sup_norm: f64,
    pub theta_seminorm: f64,
    pub theta_b_norm: f64,
    pub b: f64,
}
