//! Suspension models and the curated presets.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::potential::RealFn;
use crate::sft::{BlockIndex, SymbolicSystem, Theta};

pub const PRESETS: [&str; 5] = [
    "full2-const",
    "full2-lattice",
    "full2-nonlattice",
    "golden-mean-const",
    "random",
];

/// Shift, roof `τ > 0`, potential `f` and metric parameter θ.
#[derive(Clone, Debug)]
pub struct SuspensionModel {
    pub system: Arc<SymbolicSystem>,
    pub roof: RealFn,
    pub potential: RealFn,
    pub theta: Theta,
    pub label: String,
}

impl SuspensionModel {
    pub fn new(roof: RealFn, potential: RealFn, theta: Theta, label: impl Into<String>) -> Result<Self> {
        if roof.system() != potential.system() {
            return Err(Error::invalid("roof and potential live on different systems"));
        }
        if roof.values().iter().chain(potential.values()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("roof and potential values must be finite"));
        }
        let tmin = roof.min_value();
        if !(tmin > 0.0) {
            return Err(Error::invalid(format!("roof must be positive, min is {tmin}")));
        }
        let model = Self {
            system: roof.system().clone(),
            roof,
            potential,
            theta,
            label: label.into(),
        };
        if let Some(w) = model.roof_warning() {
            log::warn!("{}: {w}", model.label);
        }
        Ok(model)
    }

    pub fn roof_depth(&self) -> usize {
        self.roof.depth()
    }

    pub fn potential_depth(&self) -> usize {
        self.potential.depth()
    }

    /// Depth at which the normalized potential is tabulated.
    ///
    /// `max(depth f, depth τ)`, raised to 2 on non-full shifts so that the
    /// eigenfunction (one symbol shallower than the matrix) can carry the
    /// dependence on the first symbol.
    pub fn work_depth(&self) -> usize {
        let k = self.roof.depth().max(self.potential.depth());
        if k == 1 && !self.system.is_full_shift() {
            2
        } else {
            k
        }
    }

    /// Non-constant roofs taking exactly two values are cohomologous to a
    /// constant plus a lattice-valued function.
    pub fn roof_warning(&self) -> Option<String> {
        let mut vals: Vec<f64> = self.roof.values().to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        (vals.len() == 2).then(|| {
            format!(
                "roof is two-valued ({} and {}); such roofs are lattice up to a constant",
                vals[0], vals[1]
            )
        })
    }
}

pub fn preset(name: &str) -> Result<SuspensionModel> {
    let theta = Theta::new(0.5)?;
    let full2 = Arc::new(SymbolicSystem::full_shift(2)?);
    match name {
        "full2-const" => SuspensionModel::new(
            RealFn::constant(&full2, 1, 1.0)?,
            RealFn::zero(&full2, 1)?,
            theta,
            name,
        ),
        "full2-lattice" => SuspensionModel::new(
            RealFn::from_fn(&full2, 1, |w| if w[0] == 0 { 1.0 } else { 2.0 })?,
            RealFn::zero(&full2, 1)?,
            theta,
            name,
        ),
        "full2-nonlattice" => {
            let idx = BlockIndex::new(full2.clone(), 2)?;
            let roof = RealFn::from_values(
                idx,
                vec![1.0, 1.0, 1.0 + 2f64.sqrt(), 1.0 + 3f64.sqrt()],
            )?;
            SuspensionModel::new(roof, RealFn::zero(&full2, 1)?, theta, name)
        }
        "golden-mean-const" => {
            let gm = Arc::new(SymbolicSystem::golden_mean());
            SuspensionModel::new(RealFn::constant(&gm, 1, 1.0)?, RealFn::zero(&gm, 1)?, theta, name)
        }
        "random" => random_model(0, 3, 2, 0.5),
        other => Err(Error::invalid(format!(
            "unknown preset '{other}'; available: {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Random irreducible model with Hölder-like data.
///
/// Both roof and potential are sums of depth-`d` terms of amplitude
/// `variation_decay^d` for `d = 1..=roof_depth`; the roof terms are
/// nonnegative and sit on top of 1.
pub fn random_model(seed: u64, k0: usize, roof_depth: usize, variation_decay: f64) -> Result<SuspensionModel> {
    if k0 == 0 || k0 > 6 {
        return Err(Error::invalid(format!("random models need 1 <= k0 <= 6, got {k0}")));
    }
    if roof_depth == 0 || roof_depth > 6 {
        return Err(Error::invalid(format!("random models need 1 <= depth <= 6, got {roof_depth}")));
    }
    if !(variation_decay > 0.0 && variation_decay < 1.0) {
        return Err(Error::invalid("variation_decay must lie in (0,1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let system = Arc::new(random_system(&mut rng, k0)?);
    let index = BlockIndex::new(system.clone(), roof_depth)?;
    let mut roof = vec![1.0; index.len()];
    let mut pot = vec![0.0; index.len()];
    for d in 1..=roof_depth {
        let amp = variation_decay.powi(d as i32);
        let coarse = BlockIndex::new(system.clone(), d)?;
        let r: Vec<f64> = (0..coarse.len()).map(|_| amp * rng.gen::<f64>()).collect();
        let p: Vec<f64> = (0..coarse.len()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
        for (i, w) in index.words().iter().enumerate() {
            let c = coarse.find(w).expect("prefix of admissible word");
            roof[i] += r[c];
            pot[i] += p[c];
        }
    }
    SuspensionModel::new(
        RealFn::from_values(index.clone(), roof)?,
        RealFn::from_values(index, pot)?,
        Theta::new(0.5)?,
        format!("random-s{seed}-k{k0}-d{roof_depth}"),
    )
}

fn random_system(rng: &mut ChaCha8Rng, k0: usize) -> Result<SymbolicSystem> {
    for _ in 0..10_000 {
        let t: Vec<Vec<bool>> = (0..k0)
            .map(|_| (0..k0).map(|_| rng.gen_bool(0.6)).collect())
            .collect();
        if let Ok(sys) = SymbolicSystem::new(t) {
            if sys.is_irreducible() {
                return Ok(sys);
            }
        }
    }
    Err(Error::Budget("no irreducible transition table after 10000 draws".into()))
}
