//! Dolgopyat's contraction operators on the symbolic model.
//!
//! Everything here is evaluated exactly on depth-`K` blocks, where `K` is
//! large enough that the marked branch cylinders `v_i·D_j` are unions of
//! blocks and the Birkhoff sums `f^(a)_N`, `τ_N` on `v_i·u` are determined.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::complexop::{ComplexTransfer, ROOT_TOL};
use crate::error::{Error, Result};
use crate::models::SuspensionModel;
use crate::potential::{ComplexFn, RealFn};
use crate::sft::{common_prefix, BlockIndex, Theta, Word};
use crate::transfer::{self, ComplexMatrix, GibbsMeasure, NormalizedPotential, TransferMatrix};

pub const BUILD_J_FAILURE: &str =
    "μ0 too large or oscillation insufficient; rerun uni_certificate / reduce μ0";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BranchPair {
    pub ell: usize,
    pub v1: Word,
    pub v2: Word,
    pub n: usize,
}

/// Maximal cylinders `C_m` under the `D_θ` diameter threshold, with their
/// co-length-`q1` subcylinders `D_j`.
#[derive(Clone, Debug, Serialize)]
pub struct CylinderFamily {
    pub b: f64,
    pub epsilon1: f64,
    pub q1: usize,
    pub threshold: f64,
    pub cylinders: Vec<Word>,
    pub subcylinders: Vec<Word>,
    /// Index into `cylinders` of each subcylinder's parent.
    pub parent: Vec<usize>,
    /// Set when `ε1/|b| > 1`; single symbols are then returned.
    pub coarse: bool,
}

impl CylinderFamily {
    pub fn subcylinders_of(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.parent.len()).filter(move |&j| self.parent[j] == m)
    }

    pub fn max_sub_len(&self) -> usize {
        self.subcylinders.iter().map(|d| d.len()).max().unwrap_or(1)
    }

    /// Index of the cylinder that is a prefix of `w`, if `w` is long enough.
    pub fn containing(&self, w: &[u8]) -> Option<usize> {
        self.cylinders
            .iter()
            .position(|c| w.len() >= c.len() && &w[..c.len()] == c.symbols())
    }
}

pub fn select_cylinders(model: &SuspensionModel, b: f64, epsilon1: f64, q1: usize) -> Result<CylinderFamily> {
    if !(b.abs() >= 1.0) {
        return Err(Error::invalid(format!("cylinder selection needs |b| >= 1, got {b}")));
    }
    if !(epsilon1 > 0.0 && epsilon1 <= 1.0) {
        return Err(Error::invalid(format!("epsilon1 must lie in (0,1], got {epsilon1}")));
    }
    if q1 == 0 {
        return Err(Error::invalid("q1 must be at least 1"));
    }
    let sys = &model.system;
    let threshold = epsilon1 / b.abs();
    let coarse = threshold > 1.0;
    let mut cylinders = Vec::new();
    let mut stack: Vec<Vec<u8>> = (0..sys.alphabet_size() as u8).rev().map(|s| vec![s]).collect();
    while let Some(w) = stack.pop() {
        if sys.cylinder_diam_theta(&w, model.theta) <= threshold {
            cylinders.push(Word(w));
        } else {
            let mut kids = sys.extensions(&w, 1);
            kids.reverse();
            stack.extend(kids);
        }
    }
    let mut subcylinders = Vec::new();
    let mut parent = Vec::new();
    for (m, c) in cylinders.iter().enumerate() {
        for d in sys.extensions(c.symbols(), q1) {
            subcylinders.push(Word(d));
            parent.push(m);
        }
    }
    Ok(CylinderFamily {
        b,
        epsilon1,
        q1,
        threshold,
        cylinders,
        subcylinders,
        parent,
        coarse,
    })
}

/// Lexicographic pairs of length-`N` words whose last symbol may be followed by anything.
pub fn make_branch_pairs(model: &SuspensionModel, n: usize, count: usize) -> Result<Vec<BranchPair>> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let sys = &model.system;
    let k0 = sys.alphabet_size();
    let words: Vec<Vec<u8>> = sys
        .admissible_raw(n)
        .into_iter()
        .filter(|w| sys.successors(w[n - 1]).count() == k0)
        .collect();
    let mut pairs = Vec::with_capacity(count);
    'outer: for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            if pairs.len() == count {
                break 'outer;
            }
            pairs.push(BranchPair {
                ell: pairs.len(),
                v1: Word(words[i].clone()),
                v2: Word(words[j].clone()),
                n,
            });
        }
    }
    if pairs.len() < count {
        return Err(Error::invalid("branch pair unavailable; increase N"));
    }
    Ok(pairs)
}

/// `φ_ℓ(x) = τ_N(v1·x) - τ_N(v2·x)`.
pub fn phi_ell(model: &SuspensionModel, pair: &BranchPair, x: &[u8]) -> Result<f64> {
    let need = model.roof.depth().saturating_sub(1);
    if x.len() < need {
        return Err(Error::invalid(format!(
            "phi needs a continuation of at least {need} symbols, got {}",
            x.len()
        )));
    }
    let cat = |v: &Word| -> Vec<u8> { v.symbols().iter().chain(x).copied().collect() };
    let a = model.roof.birkhoff_sum(&cat(&pair.v1), pair.n)?;
    let b = model.roof.birkhoff_sum(&cat(&pair.v2), pair.n)?;
    Ok(a - b)
}

#[derive(Clone, Debug, Serialize)]
pub struct UniEntry {
    pub cylinder: Word,
    pub best_pair: usize,
    /// Subcylinders realizing the spatial oscillation, when it is positive.
    pub d: Option<Word>,
    pub d_prime: Option<Word>,
    /// `max_{ℓ, D≠D'} min_{x∈D, z∈D'} |φ_ℓ(x) - φ_ℓ(z)|`.
    pub spatial_oscillation: f64,
    /// `max_ℓ min_{x∈C} |φ_ℓ(x)|`, the lag between the two branches.
    pub branch_lag: f64,
    /// Positive oscillation divided by `diam_θ(C)`.
    pub delta_hat: f64,
    pub mechanism: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniCertificate {
    pub pass: bool,
    pub delta_hat0: f64,
    pub entries: Vec<UniEntry>,
    pub failing: Vec<Word>,
}

pub fn uni_certificate(
    model: &SuspensionModel,
    pairs: &[BranchPair],
    family: &CylinderFamily,
) -> Result<UniCertificate> {
    if family.cylinders.is_empty() || pairs.is_empty() {
        return Err(Error::invalid("need a nonempty family and at least one branch pair"));
    }
    let sys = &model.system;
    let dt = model.roof.depth();
    let entries: Vec<UniEntry> = family
        .cylinders
        .par_iter()
        .enumerate()
        .map(|(m, c)| -> Result<UniEntry> {
            let subs: Vec<usize> = family.subcylinders_of(m).collect();
            // φ values over the depth-(|D| + depth τ) blocks of each D
            let mut values: Vec<Vec<Vec<f64>>> = Vec::with_capacity(pairs.len());
            for p in pairs {
                let mut per_d = Vec::with_capacity(subs.len());
                for &j in &subs {
                    let d = family.subcylinders[j].symbols();
                    let vals = sys
                        .extensions(d, dt)
                        .iter()
                        .map(|x| phi_ell(model, p, x))
                        .collect::<Result<Vec<f64>>>()?;
                    per_d.push(vals);
                }
                values.push(per_d);
            }
            let mut best = (0.0f64, 0usize, None, None);
            let mut lag = (0.0f64, 0usize);
            for (l, per_d) in values.iter().enumerate() {
                let lag_l = per_d.iter().flatten().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                if lag_l > lag.0 {
                    lag = (lag_l, l);
                }
                for a in 0..subs.len() {
                    for b in (a + 1)..subs.len() {
                        let mut gap = f64::INFINITY;
                        for x in &per_d[a] {
                            for z in &per_d[b] {
                                gap = gap.min((x - z).abs());
                            }
                        }
                        if gap > best.0 {
                            best = (gap, l, Some(subs[a]), Some(subs[b]));
                        }
                    }
                }
            }
            let diam = sys.cylinder_diam_theta(c.symbols(), model.theta);
            let norm = if diam > 0.0 { diam } else { 1.0 };
            let (mechanism, osc, pair) = if best.0 > 0.0 {
                ("spatial", best.0, best.1)
            } else if lag.0 > 0.0 {
                ("branch-lag", lag.0, lag.1)
            } else {
                ("none", 0.0, 0)
            };
            Ok(UniEntry {
                cylinder: c.clone(),
                best_pair: pair,
                d: best.2.map(|j| family.subcylinders[j].clone()),
                d_prime: best.3.map(|j| family.subcylinders[j].clone()),
                spatial_oscillation: best.0,
                branch_lag: lag.0,
                delta_hat: osc / norm,
                mechanism,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let failing: Vec<Word> = entries
        .iter()
        .filter(|e| e.delta_hat <= 0.0)
        .map(|e| e.cylinder.clone())
        .collect();
    let delta_hat0 = entries.iter().map(|e| e.delta_hat).fold(f64::INFINITY, f64::min);
    Ok(UniCertificate {
        pass: failing.is_empty(),
        delta_hat0: if failing.is_empty() { delta_hat0 } else { 0.0 },
        entries,
        failing,
    })
}

/// `N`, `μ0`, `ε1`, `q1`, `a`, `b`, plus the cone constant `E` and the range `a0`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContractionParams {
    pub n: usize,
    pub mu0: f64,
    pub epsilon1: f64,
    pub q1: usize,
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub a0: f64,
}

/// Requested parameters before `μ0` is resolved.
#[derive(Clone, Copy, Debug)]
pub struct ContractionConfig {
    pub n: usize,
    /// `None` selects the formula value.
    pub mu0: Option<f64>,
    pub epsilon1: f64,
    pub q1: usize,
    pub a: f64,
    pub b: f64,
    pub e: f64,
    pub pair_count: usize,
    /// Metric parameter used inside `𝒟`; `None` means the model θ.
    pub theta2: Option<Theta>,
}

impl ContractionConfig {
    pub fn new(b: f64, n: usize) -> Self {
        Self {
            n,
            mu0: None,
            epsilon1: 0.5,
            q1: 1,
            a: 0.0,
            b,
            e: 2.0,
            pair_count: 2,
            theta2: None,
        }
    }
}

/// One `(i, j, ℓ)` entry of a representative set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct JEntry {
    pub i: u8,
    pub j: usize,
    pub ell: usize,
    /// 1 when `|h| ≤ ¾H` on the branch, 2 when phase cancellation was used.
    pub case: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RepresentativeSet {
    pub entries: Vec<JEntry>,
}

/// Precomputed operators and index tables for one `(model, params)` run.
pub struct DolgopyatSetup {
    pub model: SuspensionModel,
    pub params: ContractionParams,
    pub family: CylinderFamily,
    pub pairs: Vec<BranchPair>,
    pub uni: UniCertificate,
    /// `max(‖f^(a)‖₀, |f^(a)|_θ, |τ|_θ)` over `a ∈ {-a0, 0, a0}`.
    pub t_const: f64,
    pub theta2: Theta,
    pub block_depth: usize,
    pub index: Arc<BlockIndex>,
    pub norm: NormalizedPotential,
    pub m_a: TransferMatrix<f64>,
    pub l_ab: ComplexMatrix,
    /// `M_0`, the normalized operator at `a = 0`.
    pub m_0: TransferMatrix<f64>,
    pub nu: GibbsMeasure,
    /// Per `(ℓ, i, j)`: for each block `u` of depth `K-N` in `D_j`, the
    /// depth-K block of `v_i·u` and `f_N`, `τ_N` there.
    branches: Vec<[Vec<Vec<Branch>>; 2]>,
    /// `cyl_len[u][p]`: length of the `C_m` containing `u[p..]`, 0 if undetermined.
    cyl_len: Vec<Vec<usize>>,
    cyl_of: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug)]
struct Branch {
    block: usize,
    f_n: f64,
    tau_n: f64,
}

impl DolgopyatSetup {
    pub fn new(model: &SuspensionModel, cfg: ContractionConfig) -> Result<Self> {
        if cfg.n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        if !(cfg.e > 0.0) {
            return Err(Error::invalid("E must be positive"));
        }
        let family = select_cylinders(model, cfg.b, cfg.epsilon1, cfg.q1)?;
        let pairs = make_branch_pairs(model, cfg.n, cfg.pair_count)?;
        let uni = uni_certificate(model, &pairs, &family)?;
        let a0 = cfg.a.abs();
        let theta = model.theta;
        let p_f = transfer::solve_p_f(&model.potential, &model.roof, ROOT_TOL)?;
        let kf = model.work_depth();
        let norm = transfer::normalize_with(&model.potential, &model.roof, p_f, cfg.a, kf)?;
        let norm0 = if cfg.a == 0.0 {
            norm.clone()
        } else {
            transfer::normalize_with(&model.potential, &model.roof, p_f, 0.0, kf)?
        };
        let tau_semi = model.roof.theta_seminorm(theta);
        let mut t_const = tau_semi;
        let a_set: Vec<f64> = if a0 == 0.0 { vec![0.0] } else { vec![-a0, 0.0, a0] };
        for &a in &a_set {
            let fa = if a == cfg.a {
                norm.fa.clone()
            } else if a == 0.0 {
                norm0.fa.clone()
            } else {
                transfer::normalize_with(&model.potential, &model.roof, p_f, a, kf)?.fa
            };
            t_const = t_const.max(fa.sup_norm()).max(fa.theta_seminorm(theta));
        }
        let mu0 = match cfg.mu0 {
            Some(m) => m,
            None => {
                if !uni.pass {
                    return Err(Error::numerical(format!(
                        "oscillation insufficient: UNI certificate failed on {} cylinders, so the μ0 formula vanishes",
                        uni.failing.len()
                    )));
                }
                mu0_formula(theta, cfg.q1, t_const, cfg.n, uni.delta_hat0, &family, model)
            }
        };
        if !(mu0 > 0.0 && mu0 <= 0.5) {
            return Err(Error::invalid(format!("μ0 must lie in (0, 1/2], got {mu0}")));
        }
        let params = ContractionParams {
            n: cfg.n,
            mu0,
            epsilon1: cfg.epsilon1,
            q1: cfg.q1,
            a: cfg.a,
            b: cfg.b,
            e: cfg.e,
            a0,
        };
        let n = cfg.n;
        let k = (n + family.max_sub_len())
            .max(kf)
            .max(n + model.roof.depth() - 1)
            .max(n + kf - 1);
        let index = BlockIndex::new(model.system.clone(), k)?;
        let m_a = norm.matrix(k)?;
        let m_0 = norm0.matrix(k)?;
        let l_ab = ComplexTransfer::from_normalized(&norm, &model.roof, cfg.b, k)?.matrix;
        let nu = transfer::gibbs_from_normalized(&model.potential, &model.roof, &norm0, k)?;
        let tail_index = BlockIndex::new(model.system.clone(), k - n)?;
        let fa_k = norm.fa.clone();
        let mut branches = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let mut both: [Vec<Vec<Branch>>; 2] = [Vec::new(), Vec::new()];
            for (side, v) in [&p.v1, &p.v2].into_iter().enumerate() {
                for d in &family.subcylinders {
                    let list = tail_index
                        .prefix_range(d.symbols())
                        .map(|t| {
                            let w: Vec<u8> = v.symbols().iter().chain(tail_index.word(t)).copied().collect();
                            Branch {
                                block: index.find(&w).expect("branch word is admissible"),
                                f_n: fa_k.birkhoff_unchecked(&w, n),
                                tau_n: model.roof.birkhoff_unchecked(&w, n),
                            }
                        })
                        .collect();
                    both[side].push(list);
                }
            }
            branches.push(both);
        }
        let mut cyl_len = Vec::with_capacity(index.len());
        let mut cyl_of = Vec::with_capacity(index.len());
        for u in index.words() {
            let (lens, ids): (Vec<usize>, Vec<usize>) = (0..k)
                .map(|p| match family.containing(&u[p..]) {
                    Some(m) => (family.cylinders[m].len(), m),
                    None => (0, usize::MAX),
                })
                .unzip();
            cyl_len.push(lens);
            cyl_of.push(ids);
        }
        Ok(Self {
            model: model.clone(),
            params,
            family,
            pairs,
            uni,
            t_const,
            theta2: cfg.theta2.unwrap_or(theta),
            block_depth: k,
            index,
            norm,
            m_a,
            l_ab,
            m_0,
            nu,
            branches,
            cyl_len,
            cyl_of,
        })
    }

    pub fn theta(&self) -> Theta {
        self.model.theta
    }

    /// Depth-K representation of a real function.
    pub fn real_on_blocks(&self, h: &RealFn) -> Result<Vec<f64>> {
        if h.depth() > self.block_depth {
            return Err(Error::invalid("function is deeper than the block depth"));
        }
        Ok(h.refine_onto(&self.index).into_values())
    }

    pub fn complex_on_blocks(&self, h: &ComplexFn) -> Result<Vec<Complex64>> {
        if h.depth() > self.block_depth {
            return Err(Error::invalid("function is deeper than the block depth"));
        }
        Ok(h.refine_onto(&self.index).into_values())
    }

    /// Validates a representative set: one `(i, ℓ)` per `j`, one `D_j` in every `C_m`.
    pub fn check_representative(&self, j: &RepresentativeSet) -> Result<()> {
        let mut seen_j = vec![false; self.family.subcylinders.len()];
        let mut seen_m = vec![false; self.family.cylinders.len()];
        for e in &j.entries {
            if e.j >= seen_j.len() || e.ell >= self.pairs.len() || !(e.i == 1 || e.i == 2) {
                return Err(Error::invalid("representative set entry out of range"));
            }
            if seen_j[e.j] {
                return Err(Error::invalid(format!("subcylinder {} is marked twice", e.j)));
            }
            seen_j[e.j] = true;
            seen_m[self.family.parent[e.j]] = true;
        }
        if !j.entries.is_empty() && seen_m.iter().any(|&s| !s) {
            return Err(Error::invalid("representative set misses a cylinder"));
        }
        Ok(())
    }

    /// `ω_J = 1 - μ0 Σ χ_{v_i·D_j}` on depth-K blocks.
    pub fn omega(&self, j: &RepresentativeSet) -> Result<Vec<f64>> {
        self.check_representative(j)?;
        let mut w = vec![1.0; self.index.len()];
        for e in &j.entries {
            for br in &self.branches[e.ell][(e.i - 1) as usize][e.j] {
                w[br.block] = 1.0 - self.params.mu0;
            }
        }
        Ok(w)
    }

    /// `(ω_J, N_J H = M_a^N(ω_J H))`.
    pub fn omega_and_contract(&self, j: &RepresentativeSet, h: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if h.len() != self.index.len() || h.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::invalid("H must be a nonnegative depth-K table"));
        }
        let w = self.omega(j)?;
        let wh: Vec<f64> = w.iter().zip(h).map(|(a, b)| a * b).collect();
        let out = self.m_a.apply_power(&wh, self.params.n);
        Ok((w, out))
    }

    /// Selects `J` from `(h, H)`: a cancelling branch on every cylinder where one exists.
    pub fn build_j(&self, h: &[Complex64], big_h: &[f64]) -> Result<RepresentativeSet> {
        if h.len() != self.index.len() || big_h.len() != self.index.len() {
            return Err(Error::invalid("h and H must be depth-K tables"));
        }
        if big_h.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("H must be positive"));
        }
        if h.iter().zip(big_h).any(|(z, &x)| z.norm() > x * (1.0 + 1e-12)) {
            return Err(Error::invalid("build_J needs |h| <= H"));
        }
        let mu0 = self.params.mu0;
        let b = self.params.b;
        let picks: Vec<Option<JEntry>> = (0..self.family.cylinders.len())
            .into_par_iter()
            .map(|m| {
                let subs: Vec<usize> = self.family.subcylinders_of(m).collect();
                for i in 0..2usize {
                    for &j in &subs {
                        for ell in 0..self.pairs.len() {
                            let ok = self.branches[ell][i][j]
                                .iter()
                                .all(|br| h[br.block].norm() <= 0.75 * big_h[br.block]);
                            if ok {
                                return Some(JEntry { i: i as u8 + 1, j, ell, case: 1 });
                            }
                        }
                    }
                }
                for i in 0..2usize {
                    for &j in &subs {
                        for ell in 0..self.pairs.len() {
                            let b1 = &self.branches[ell][0][j];
                            let b2 = &self.branches[ell][1][j];
                            let ok = b1.iter().zip(b2).all(|(x, y)| {
                                let rho1 = Complex64::from_polar(x.f_n.exp(), -b * x.tau_n) * h[x.block];
                                let rho2 = Complex64::from_polar(y.f_n.exp(), -b * y.tau_n) * h[y.block];
                                let g1 = x.f_n.exp() * big_h[x.block];
                                let g2 = y.f_n.exp() * big_h[y.block];
                                let gamma = if i == 0 { (1.0 - mu0) * g1 + g2 } else { g1 + (1.0 - mu0) * g2 };
                                (rho1 + rho2).norm() <= gamma
                            });
                            if ok {
                                return Some(JEntry { i: i as u8 + 1, j, ell, case: 2 });
                            }
                        }
                    }
                }
                None
            })
            .collect();
        let missing = picks.iter().filter(|p| p.is_none()).count();
        if missing > 0 {
            return Err(Error::numerical(format!("{BUILD_J_FAILURE} ({missing} cylinders without a triple)")));
        }
        Ok(RepresentativeSet {
            entries: picks.into_iter().flatten().collect(),
        })
    }

    /// `|L_ab^N h| ≤ N_J H` blockwise.
    pub fn domination_check(&self, h: &[Complex64], big_h: &[f64], j: &RepresentativeSet) -> Result<DominationReport> {
        let lh = self.l_ab.apply_power(h, self.params.n);
        let (_, nh) = self.omega_and_contract(j, big_h)?;
        let margins: Vec<f64> = nh.iter().zip(&lh).map(|(n, l)| n - l.norm()).collect();
        let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = nh.iter().copied().fold(0.0, f64::max);
        let marked: Vec<usize> = self.marked_blocks(j);
        let marked_margin = marked.iter().map(|&u| margins[u]).fold(f64::INFINITY, f64::min);
        Ok(DominationReport {
            pass: worst_margin >= -1e-12 * scale,
            worst_margin,
            marked_margin,
            lh,
            nh,
        })
    }

    /// Depth-K blocks of `v_i·u` for the blocks `u` of `D_j`, in the order of `u`.
    pub fn branch_blocks(&self, ell: usize, i: u8, j: usize) -> Vec<usize> {
        self.branches[ell][(i - 1) as usize][j].iter().map(|b| b.block).collect()
    }

    /// Blocks `u` lying in some marked `D_j`.
    pub fn marked_blocks(&self, j: &RepresentativeSet) -> Vec<usize> {
        let mut out = Vec::new();
        for e in &j.entries {
            out.extend(self.index.prefix_range(self.family.subcylinders[e.j].symbols()));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `𝒟(u, u')` for two depth-K blocks.
    pub fn script_d(&self, u: usize, u2: usize) -> f64 {
        if u == u2 {
            return 0.0;
        }
        let (wu, wv) = (self.index.word(u), self.index.word(u2));
        let l = common_prefix(wu, wv);
        self.script_d_with_prefix(u, l)
    }

    fn script_d_with_prefix(&self, u: usize, l: usize) -> f64 {
        let theta = self.theta2;
        for p in (0..=l.min(self.block_depth - 1)).rev() {
            let cl = self.cyl_len[u][p];
            if cl > 0 && p + cl <= l {
                let m = self.cyl_of[u][p];
                let c = &self.family.cylinders[m];
                let diam = self.model.system.cylinder_diam_theta(c.symbols(), theta);
                return theta.pow(l) / diam;
            }
        }
        theta.pow(self.params.n).recip()
    }

    /// Exhaustive `K_E` membership over the eligible block pairs.
    pub fn k_e_check(&self, big_h: &[f64], e: f64) -> KEReport {
        let n = self.index.len();
        let words = self.index.words();
        let rows: Vec<(f64, usize)> = (0..n)
            .into_par_iter()
            .map(|u| {
                let mut worst = 0.0f64;
                let mut pairs = 0usize;
                for v in 0..n {
                    if u == v {
                        continue;
                    }
                    let l = common_prefix(&words[u], &words[v]);
                    if !self.eligible(u, l) {
                        continue;
                    }
                    pairs += 1;
                    let d = self.script_d_with_prefix(u, l);
                    let ratio = (big_h[u] - big_h[v]).abs() / (big_h[v] * d);
                    worst = worst.max(ratio);
                }
                (worst, pairs)
            })
            .collect();
        let worst_ratio = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        KEReport {
            member: big_h.iter().all(|&x| x > 0.0) && worst_ratio <= e * (1.0 + 1e-12),
            worst_ratio,
            e,
            eligible_pairs: rows.iter().map(|r| r.1).sum(),
        }
    }

    fn eligible(&self, u: usize, l: usize) -> bool {
        (0..=l.min(self.block_depth - 1)).any(|p| {
            let cl = self.cyl_len[u][p];
            cl > 0 && p + cl <= l
        })
    }

    /// `ρ3 = e^{a0 N T} / (1 + μ0 e^{-NT} / C5)` with `C5 = 4E²/(1-ω0)`.
    pub fn rho3(&self, j: &RepresentativeSet) -> f64 {
        let p = &self.params;
        let nt = p.n as f64 * self.t_const;
        let one_minus_omega0 = self.one_minus_omega0(j);
        let c5 = 4.0 * p.e * p.e / one_minus_omega0;
        (p.a0 * nt).exp() / (1.0 + p.mu0 * (-nt).exp() / c5)
    }

    /// `min_m ν(D_{j_m}) / ν(C_m)` over the marked subcylinders.
    fn one_minus_omega0(&self, j: &RepresentativeSet) -> f64 {
        j.entries
            .iter()
            .map(|e| {
                let d = self.nu.mass_of(self.family.subcylinders[e.j].symbols());
                let c = self.nu.mass_of(self.family.cylinders[self.family.parent[e.j]].symbols());
                d / c
            })
            .fold(1.0, f64::min)
    }

    /// `∫(N_J H)² dν ≤ ρ3 ∫ L^N_{f^(0)}(H²) dν`, integrals over the whole space.
    pub fn l2_contraction_check(&self, big_h: &[f64], j: &RepresentativeSet) -> Result<L2Report> {
        let rho3 = self.rho3(j);
        if rho3 >= 1.0 {
            return Err(Error::numerical(format!(
                "ρ3 = {rho3} >= 1; take a smaller a0 (the factor e^(a0 N T) dominates the μ0 gain)"
            )));
        }
        let (_, nh) = self.omega_and_contract(j, big_h)?;
        let masses = self.nu.masses.values();
        let lhs: f64 = nh.iter().zip(masses).map(|(x, m)| x * x * m).sum();
        let h2: Vec<f64> = big_h.iter().map(|x| x * x).collect();
        let rhs: f64 = self
            .m_0
            .apply_power(&h2, self.params.n)
            .iter()
            .zip(masses)
            .map(|(x, m)| x * m)
            .sum();
        let ratio = lhs / rhs;
        Ok(L2Report {
            pass: ratio <= rho3,
            ratio,
            rho3,
            vacuous: j.entries.is_empty(),
        })
    }

    /// `(h^(m), H^(m))` with `H^(m) = N_{J_m} H^(m-1)` and `h^(m) = L_ab^N h^(m-1)`.
    pub fn decay_experiment(&self, h0: &ComplexFn, m_max: usize) -> Result<DecayExperiment> {
        let theta = self.model.theta;
        let size = h0.norm_theta_b(theta, self.params.b.abs().max(1.0))?.theta_b_norm;
        let scale = if size > 1.0 { 1.0 / size } else { 1.0 };
        let mut h: Vec<Complex64> = self.complex_on_blocks(h0)?.iter().map(|z| z * scale).collect();
        let mut big_h = vec![1.0; self.index.len()];
        let masses = self.nu.masses.values();
        let l2c = |v: &[Complex64]| v.iter().zip(masses).map(|(z, m)| z.norm_sqr() * m).sum::<f64>();
        let l2r = |v: &[f64]| v.iter().zip(masses).map(|(x, m)| x * x * m).sum::<f64>();
        let mut rows = vec![DecayRow {
            m: 0,
            h_l2: l2c(&h),
            big_h_l2: Some(l2r(&big_h)),
        }];
        let mut failure = None;
        let mut max_violation = 0.0f64;
        let mut sets = Vec::new();
        for m in 1..=m_max {
            let next_h = self.l_ab.apply_power(&h, self.params.n);
            let mut row = DecayRow {
                m,
                h_l2: l2c(&next_h),
                big_h_l2: None,
            };
            if failure.is_none() {
                match self.build_j(&h, &big_h) {
                    Ok(j) => {
                        let (_, nh) = self.omega_and_contract(&j, &big_h)?;
                        for (z, x) in next_h.iter().zip(&nh) {
                            max_violation = max_violation.max(z.norm() - x);
                        }
                        row.big_h_l2 = Some(l2r(&nh));
                        big_h = nh;
                        sets.push(j.entries.len());
                    }
                    Err(e) => failure = Some((m, e.to_string())),
                }
            }
            rows.push(row);
            h = next_h;
        }
        let h_col: Vec<f64> = rows.iter().map(|r| r.h_l2).collect();
        let big_col: Vec<f64> = rows.iter().filter_map(|r| r.big_h_l2).collect();
        Ok(DecayExperiment {
            h_rate: crate::complexop::tail_rate(&h_col),
            big_h_rate: crate::complexop::tail_rate(&big_col),
            invariant_holds: max_violation <= 1e-12,
            max_violation,
            failure_step: failure.as_ref().map(|f| f.0),
            failure: failure.map(|f| f.1),
            rescale: scale,
            rows,
            marked_per_step: sets,
        })
    }
}

/// μ0 from the two-term minimum, with the certificate's phase spread in the sine.
fn mu0_formula(
    theta: Theta,
    q1: usize,
    t: f64,
    n: usize,
    delta_hat0: f64,
    family: &CylinderFamily,
    model: &SuspensionModel,
) -> f64 {
    let spread = family
        .cylinders
        .iter()
        .map(|c| family.b.abs() * model.system.cylinder_diam_theta(c.symbols(), theta))
        .fold(f64::INFINITY, f64::min);
    let delta = delta_hat0 * spread;
    let first = theta.pow(q1) * (-t / (1.0 - theta.get())).exp() / 6.0;
    let second = (delta / 16.0).sin().powi(2) / (8.0 * (2.0 * t * n as f64).exp());
    first.min(second)
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub pass: bool,
    pub worst_margin: f64,
    /// Smallest margin over blocks inside marked subcylinders.
    pub marked_margin: f64,
    #[serde(skip)]
    pub lh: Vec<Complex64>,
    #[serde(skip)]
    pub nh: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KEReport {
    pub member: bool,
    pub worst_ratio: f64,
    pub e: f64,
    pub eligible_pairs: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct L2Report {
    pub pass: bool,
    pub ratio: f64,
    pub rho3: f64,
    /// Set when `J` is empty, so nothing is contracted.
    pub vacuous: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayRow {
    pub m: usize,
    pub h_l2: f64,
    /// Missing after a `build_J` failure.
    pub big_h_l2: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayExperiment {
    pub rows: Vec<DecayRow>,
    pub h_rate: f64,
    pub big_h_rate: f64,
    pub invariant_holds: bool,
    pub max_violation: f64,
    pub failure_step: Option<usize>,
    pub failure: Option<String>,
    pub rescale: f64,
    pub marked_per_step: Vec<usize>,
}
