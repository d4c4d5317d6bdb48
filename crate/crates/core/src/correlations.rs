//! Monte-Carlo flow correlations on the suspension and decay-rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::complexop::ROOT_TOL;
use crate::error::{Error, Result};
use crate::models::SuspensionModel;
use crate::potential::RealFn;
use crate::sft::Word;
use crate::transfer::{self, GibbsMeasure};

/// A point `(x, s)` of the suspension, `0 ≤ s < τ(x)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuspensionPoint {
    pub base: Word,
    pub height: f64,
}

impl SuspensionPoint {
    pub fn new(model: &SuspensionModel, base: Word, height: f64) -> Result<Self> {
        let tau = model.roof.evaluate(base.symbols())?;
        if !(height >= 0.0 && height < tau) {
            return Err(Error::invalid(format!("height {height} outside [0, {tau})")));
        }
        Ok(Self { base, height })
    }
}

/// Piecewise-linear function of the height, constant outside its knots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeightProfile {
    knots: Vec<(f64, f64)>,
}

impl HeightProfile {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::invalid("height profile needs at least one knot"));
        }
        if knots.iter().any(|(s, v)| !s.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("height profile knots must be finite"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("height profile knots must be strictly increasing"));
        }
        Ok(Self { knots })
    }

    pub fn constant(v: f64) -> Self {
        Self { knots: vec![(0.0, v)] }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = &self.knots;
        if s <= k[0].0 {
            return k[0].1;
        }
        let i = k.partition_point(|&(x, _)| x <= s);
        if i == k.len() {
            return k[i - 1].1;
        }
        let ((x0, y0), (x1, y1)) = (k[i - 1], k[i]);
        y0 + (y1 - y0) * (s - x0) / (x1 - x0)
    }

    /// `∫_0^τ p(s) q(s) ds`, exact since the product is piecewise quadratic.
    pub fn product_integral(&self, other: &HeightProfile, tau: f64) -> f64 {
        let mut cuts = vec![0.0, tau];
        cuts.extend(
            self.knots
                .iter()
                .chain(&other.knots)
                .map(|k| k.0)
                .filter(|&s| s > 0.0 && s < tau),
        );
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let f = |s: f64| self.eval(s) * other.eval(s);
                (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
            })
            .sum()
    }
}

/// `A(x, s) = base(x)·profile(s) + offset`.
#[derive(Clone, Debug)]
pub struct Observable {
    pub base: RealFn,
    pub profile: HeightProfile,
    pub offset: f64,
}

impl Observable {
    pub fn new(base: RealFn, profile: HeightProfile) -> Self {
        Self { base, profile, offset: 0.0 }
    }

    pub fn symbolic(base: RealFn) -> Self {
        Self::new(base, HeightProfile::constant(1.0))
    }

    pub fn value(&self, base_value: f64, s: f64) -> f64 {
        base_value * self.profile.eval(s) + self.offset
    }

    /// Shifts the observable to flow-mean zero.
    pub fn centered(mut self, model: &SuspensionModel) -> Result<Self> {
        let nu = flow_base_measure(model, self.base.depth())?;
        let m = exact_mean_with(model, &nu, &self)?;
        self.offset -= m;
        Ok(self)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationTable {
    pub t_grid: Vec<f64>,
    pub c_values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub replicas: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct CorrelationOptions {
    pub replicas: usize,
    pub batches: usize,
    /// Base steps discarded before sampling; shifts the time window.
    pub offset: usize,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        Self { replicas: 4, batches: 32, offset: 0 }
    }
}

/// Forward sampler for the Gibbs chain, one window of `k` symbols of state.
struct PathSampler {
    k: usize,
    index: std::sync::Arc<crate::sft::BlockIndex>,
    /// Cumulative start distribution over depth-k blocks.
    start: Vec<f64>,
    /// Per window: cumulative next-symbol probabilities with their symbols.
    next: Vec<Vec<(f64, u8)>>,
}

impl PathSampler {
    fn new(model: &SuspensionModel) -> Result<Self> {
        let k = model.work_depth();
        let nu = transfer::gibbs_measure(model, k + 1, ROOT_TOL)?;
        let index = crate::sft::BlockIndex::new(model.system.clone(), k)?;
        let mut acc = 0.0;
        let start = index
            .words()
            .iter()
            .map(|w| {
                acc += nu.mass_of(w);
                acc
            })
            .collect();
        let next = index
            .words()
            .iter()
            .map(|w| {
                let base = nu.mass_of(w);
                let mut acc = 0.0;
                model
                    .system
                    .successors(w[k - 1])
                    .map(|s| {
                        let mut ws = w.clone();
                        ws.push(s);
                        acc += nu.mass_of(&ws) / base;
                        (acc, s)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { k, index, start, next })
    }

    fn pick<T: Copy>(table: &[(f64, T)], u: f64) -> T {
        let total = table.last().expect("nonempty table").0;
        let i = table.partition_point(|&(c, _)| c <= u * total);
        table[i.min(table.len() - 1)].1
    }

    fn sample(&self, length: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let total = *self.start.last().expect("nonempty index");
        let u: f64 = rng.gen::<f64>() * total;
        let b = self.start.partition_point(|&c| c <= u).min(self.start.len() - 1);
        let mut path = self.index.word(b).to_vec();
        path.reserve(length.saturating_sub(self.k));
        let mut state = b;
        while path.len() < length {
            let s = Self::pick(&self.next[state], rng.gen());
            path.push(s);
            let n = path.len();
            state = self.index.find(&path[n - self.k..]).expect("admissible window");
        }
        path.truncate(length);
        path
    }
}

/// Stationary sample of the Gibbs chain; deterministic under `seed`.
pub fn sample_gibbs_path(model: &SuspensionModel, length: usize, seed: u64) -> Result<Vec<u8>> {
    sample_stream(model, length, seed, 0)
}

/// Same as [`sample_gibbs_path`] on an independent ChaCha stream.
pub fn sample_stream(model: &SuspensionModel, length: usize, seed: u64, stream: u64) -> Result<Vec<u8>> {
    if length == 0 {
        return Err(Error::invalid("path length must be at least 1"));
    }
    let sampler = PathSampler::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(sampler.sample(length, &mut rng))
}

fn flow_base_measure(model: &SuspensionModel, depth: usize) -> Result<GibbsMeasure> {
    transfer::gibbs_measure(model, depth.max(model.roof.depth()).max(1), ROOT_TOL)
}

/// `∫A dμ` for the flow measure `ν × Leb / ∫τ dν`.
pub fn exact_mean(model: &SuspensionModel, a: &Observable) -> Result<f64> {
    let nu = flow_base_measure(model, a.base.depth())?;
    exact_mean_with(model, &nu, a)
}

fn exact_mean_with(model: &SuspensionModel, nu: &GibbsMeasure, a: &Observable) -> Result<f64> {
    let one = HeightProfile::constant(1.0);
    let d = nu.block_depth();
    let base = a.base.refine(d.max(a.base.depth()))?;
    let tau = model.roof.refine(base.depth())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, w) in base.index().words().iter().enumerate() {
        let m = nu.mass_of(w);
        let t = tau.values()[i];
        num += m * (base.values()[i] * a.profile.product_integral(&one, t) + a.offset * t);
        den += m * t;
    }
    Ok(num / den)
}

/// Exact `∫A·B dμ - ∫A dμ ∫B dμ`, the value of `C(0)`.
pub fn exact_covariance(model: &SuspensionModel, a: &Observable, b: &Observable) -> Result<f64> {
    let d = a.base.depth().max(b.base.depth()).max(model.roof.depth());
    let nu = flow_base_measure(model, d)?;
    let ea = exact_mean_with(model, &nu, a)?;
    let eb = exact_mean_with(model, &nu, b)?;
    let fa = a.base.refine(d)?;
    let fb = b.base.refine(d)?;
    let tau = model.roof.refine(d)?;
    let one = HeightProfile::constant(1.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, w) in fa.index().words().iter().enumerate() {
        let m = nu.mass_of(w);
        let t = tau.values()[i];
        let (x, y) = (fa.values()[i], fb.values()[i]);
        let ab = x * y * a.profile.product_integral(&b.profile, t)
            + (x * b.offset) * a.profile.product_integral(&one, t)
            + (y * a.offset) * b.profile.product_integral(&one, t)
            + a.offset * b.offset * t;
        num += m * ab;
        den += m * t;
    }
    Ok(num / den - ea * eb)
}

pub fn correlation(
    model: &SuspensionModel,
    a: &Observable,
    b: &Observable,
    t_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<CorrelationTable> {
    correlation_with(model, a, b, t_grid, samples, seed, CorrelationOptions::default())
}

/// `C(t) = ∫A·B∘φ_t dμ - ∫A∫B` along long trajectories.
///
/// Each replica samples base indices `n` of one stationary path; heights are
/// drawn uniformly in `[0, τ_n)` and weighted by `τ_n / ∫τ dν`, so each term
/// has expectation `∫A·B∘φ_t dμ`.
pub fn correlation_with(
    model: &SuspensionModel,
    a: &Observable,
    b: &Observable,
    t_grid: &[f64],
    samples: usize,
    seed: u64,
    opts: CorrelationOptions,
) -> Result<CorrelationTable> {
    if t_grid.is_empty() {
        return Err(Error::invalid("t grid is empty"));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid("t grid entries must be finite and nonnegative"));
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("t grid must be increasing"));
    }
    if opts.replicas == 0 || opts.batches < 2 {
        return Err(Error::invalid("need at least one replica and two batches"));
    }
    let per = samples / opts.replicas;
    if per < opts.batches {
        return Err(Error::invalid(format!(
            "{samples} samples cannot fill {} replicas of {} batches",
            opts.replicas, opts.batches
        )));
    }
    let d = a.base.depth().max(b.base.depth()).max(model.roof.depth());
    let nu = flow_base_measure(model, d)?;
    let ea = exact_mean_with(model, &nu, a)?;
    let eb = exact_mean_with(model, &nu, b)?;
    let mean_tau = transfer::integrate(&nu, &model.roof)?;
    let t_max = *t_grid.last().unwrap();
    let lookahead = (t_max / model.roof.min_value()).ceil() as usize + 2;
    let sampler = PathSampler::new(model)?;
    let fa = a.base.refine(d)?;
    let fb = b.base.refine(d)?;
    let tau = model.roof.refine(d)?;
    let nt = t_grid.len();

    let replicas: Vec<(Vec<f64>, Vec<f64>)> = (0..opts.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let len = opts.offset + per + lookahead + d;
            let path = sampler.sample(len, &mut rng);
            let blocks: Vec<usize> = (0..len - d + 1)
                .map(|m| fa.index().find(&path[m..m + d]).expect("admissible window"))
                .collect();
            let tv: Vec<f64> = blocks.iter().map(|&i| tau.values()[i]).collect();
            let mut sums = vec![vec![0.0; nt]; opts.batches];
            let batch_len = per / opts.batches;
            let used = batch_len * opts.batches;
            for k in 0..used {
                let n = opts.offset + k;
                let s = rng.gen::<f64>() * tv[n];
                let weight = tv[n] / mean_tau;
                let av = a.value(fa.values()[blocks[n]], s);
                let row = &mut sums[k / batch_len];
                // fiber m starts at flow time h after the base point of fiber n
                let (mut m, mut h) = (n, 0.0);
                for (ti, &t) in t_grid.iter().enumerate() {
                    let target = s + t;
                    while target >= h + tv[m] {
                        h += tv[m];
                        m += 1;
                    }
                    let bv = b.value(fb.values()[blocks[m]], target - h);
                    row[ti] += weight * av * bv;
                }
            }
            let mut est = vec![0.0; nt];
            let mut var = vec![0.0; nt];
            let nb = opts.batches as f64;
            for ti in 0..nt {
                let means: Vec<f64> = sums.iter().map(|row| row[ti] / batch_len as f64).collect();
                let total: f64 = means.iter().sum();
                let full = total / nb;
                // delete-one-batch jackknife
                let loo: Vec<f64> = means.iter().map(|m| (total - m) / (nb - 1.0)).collect();
                let loo_mean = loo.iter().sum::<f64>() / nb;
                var[ti] = (nb - 1.0) / nb * loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>();
                est[ti] = full - ea * eb;
            }
            (est, var)
        })
        .collect();

    let mut c_values = vec![0.0; nt];
    let mut stderr = vec![0.0; nt];
    for ti in 0..nt {
        let ws: Vec<(f64, f64)> = replicas.iter().map(|(e, v)| (e[ti], v[ti])).collect();
        let exact: Vec<f64> = ws.iter().filter(|(_, v)| *v == 0.0).map(|(e, _)| *e).collect();
        if !exact.is_empty() {
            // a noiseless integrand: every replica gives the same value
            c_values[ti] = exact.iter().sum::<f64>() / exact.len() as f64;
            continue;
        }
        let wsum: f64 = ws.iter().map(|(_, v)| 1.0 / v).sum();
        c_values[ti] = ws.iter().map(|(e, v)| e / v).sum::<f64>() / wsum;
        stderr[ti] = (1.0 / wsum).sqrt();
    }
    Ok(CorrelationTable {
        t_grid: t_grid.to_vec(),
        c_values,
        stderr,
        samples: per * opts.replicas,
        seed,
        replicas: opts.replicas,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Rate in `|C(t)| ≈ C e^{-ct}`.
    pub c: f64,
    pub prefactor: f64,
    pub r2: f64,
    pub c_stderr: f64,
    pub points: usize,
    pub envelope: bool,
}

const SIGNAL_ERROR: &str = "signal below noise; increase samples";

/// Least squares on `log|C(t)|` over points with `|C| > 3·stderr`.
pub fn fit_decay_rate(table: &CorrelationTable) -> Result<DecayFit> {
    let pts = qualifying(table)?;
    fit_points(&pts, false)
}

/// Same fit restricted to local maxima of `|C|`, for oscillating tables.
pub fn fit_decay_envelope(table: &CorrelationTable) -> Result<DecayFit> {
    let pts = qualifying(table)?;
    let abs: Vec<f64> = table.c_values.iter().map(|c| c.abs()).collect();
    let n = abs.len();
    let peaks: Vec<(f64, f64)> = (0..n)
        .filter(|&i| {
            let left = i == 0 || abs[i] >= abs[i - 1];
            let right = i + 1 < n && abs[i] > abs[i + 1];
            left && right && abs[i] > 3.0 * table.stderr[i]
        })
        .map(|i| (table.t_grid[i], abs[i].ln()))
        .collect();
    if peaks.len() < 3 {
        return Err(Error::numerical(format!(
            "{SIGNAL_ERROR} ({} qualifying points, {} peaks)",
            pts.len(),
            peaks.len()
        )));
    }
    fit_points(&peaks, true)
}

fn qualifying(table: &CorrelationTable) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = table
        .t_grid
        .iter()
        .zip(&table.c_values)
        .zip(&table.stderr)
        .filter(|((_, c), s)| c.abs() > 3.0 * **s)
        .map(|((t, c), _)| (*t, c.abs().ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::numerical(format!("{SIGNAL_ERROR} ({} qualifying points)", pts.len())));
    }
    Ok(pts)
}

fn fit_points(pts: &[(f64, f64)], envelope: bool) -> Result<DecayFit> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::numerical("fit points share one time value"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - icept - slope * p.0).powi(2)).sum();
    let sst: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let c_stderr = if pts.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    Ok(DecayFit {
        c: -slope,
        prefactor: icept.exp(),
        r2,
        c_stderr,
        points: pts.len(),
        envelope,
    })
}
