//! Property suites for the twisted operators and the contraction operators.

use std::sync::LazyLock;

use num_complex::Complex64;
use proptest::prelude::*;
use ruellelab::complexop::{self, ComplexTransfer};
use ruellelab::dolgopyat::{ContractionConfig, DolgopyatSetup, JEntry, RepresentativeSet};
use ruellelab::sft::common_prefix;
use ruellelab::transfer;
use ruellelab::{preset, random_model, ComplexFn, SuspensionModel};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn operators(m: &SuspensionModel, a: f64, b: f64, extra: usize) -> (ruellelab::TransferMatrix<f64>, ComplexTransfer) {
    let norm = transfer::normalize(m, a, 1e-14).unwrap();
    let k = norm.depth() + extra;
    (norm.matrix(k).unwrap(), ComplexTransfer::from_normalized(&norm, &m.roof, b, k).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn pointwise_domination(seed in 0u64..10_000, b in -30.0f64..30.0, a in -0.2f64..0.2,
                            h in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64)) {
        let m = random_model(seed, 3, 2, 0.5).unwrap();
        let (ma, lab) = operators(&m, a, b, 1);
        let h: Vec<Complex64> = h[..ma.len().min(64)].iter().map(|&(x, y)| c(x, y)).collect();
        prop_assume!(h.len() == ma.len());
        let mut lh = h.clone();
        let mut mh: Vec<f64> = h.iter().map(|z| z.norm()).collect();
        for _ in 0..8 {
            lh = lab.matrix.apply(&lh);
            mh = ma.apply(&mh);
            for (z, x) in lh.iter().zip(&mh) {
                prop_assert!(z.norm() <= x * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn radius_bounds_and_symmetry(seed in 0u64..10_000, b in 0.1f64..40.0) {
        let m = random_model(seed, 3, 2, 0.5).unwrap();
        let r = complexop::spectral_radius(&complexop::assemble_complex(&m, 0.0, b).unwrap()).radius;
        let r_neg = complexop::spectral_radius(&complexop::assemble_complex(&m, 0.0, -b).unwrap()).radius;
        prop_assert!(r <= 1.0 + 1e-10);
        prop_assert!((r - r_neg).abs() <= 1e-12, "{} vs {}", r, r_neg);
    }
}

/// Smallest `A0` over pairs in a common 1-cylinder with `|L^m h(u) - L^m h(u')| ≤ A0 [B θ^m M^m H(u') + |b| M^m|h|(u')] D_θ(u,u')`.
fn minimal_a0(m: &SuspensionModel, b: f64, h: &[Complex64], big_h: &[f64]) -> f64 {
    let (ma, lab) = operators(m, 0.0, b, 1);
    let words = ma.index().words();
    let theta = m.theta;
    let n = ma.len();
    let mut bb = 0.0f64;
    for v in 0..n {
        for w in 0..n {
            let l = common_prefix(&words[v], &words[w]);
            if l >= 1 && l < words[v].len() {
                bb = bb.max((h[v] - h[w]).norm() / (big_h[w] * theta.pow(l)));
            }
        }
    }
    let mut a0 = 0.0f64;
    let (mut lh, mut mh, mut mabs) = (h.to_vec(), big_h.to_vec(), h.iter().map(|z| z.norm()).collect::<Vec<_>>());
    for step in 1..=6 {
        lh = lab.matrix.apply(&lh);
        mh = ma.apply(&mh);
        mabs = ma.apply(&mabs);
        for u in 0..n {
            for u2 in 0..n {
                let l = common_prefix(&words[u], &words[u2]);
                if l == 0 || l == words[u].len() {
                    continue;
                }
                let d = theta.pow(l);
                let rhs = (bb * theta.pow(step) * mh[u2] + b.abs() * mabs[u2]) * d;
                a0 = a0.max((lh[u] - lh[u2]).norm() / rhs);
            }
        }
    }
    a0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lasota_yorke_constant_is_uniform_in_b(seed in 0u64..10_000,
            h in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.5f64..2.0), 64)) {
        let m = random_model(seed, 2, 2, 0.5).unwrap();
        let norm = transfer::normalize(&m, 0.0, 1e-14).unwrap();
        let n = ruellelab::BlockIndex::new(m.system.clone(), norm.depth() + 1).unwrap().len();
        prop_assume!(n <= 64);
        let hv: Vec<Complex64> = h[..n].iter().map(|&(x, y, _)| c(x, y)).collect();
        let big: Vec<f64> = h[..n].iter().map(|t| t.2).collect();
        let th = m.theta.get();
        let f_semi = norm.fa.theta_seminorm(m.theta);
        let tau_semi = m.roof.theta_seminorm(m.theta);
        let cf = f_semi * th / (1.0 - th);
        let theory = cf.exp() * (1.0f64).max((f_semi + tau_semi) * th / (1.0 - th));
        for b in [1.0, 10.0, 100.0] {
            let a0 = minimal_a0(&m, b, &hv, &big);
            prop_assert!(a0.is_finite() && a0 <= theory * (1.0 + 1e-9), "b={} A0={} bound={}", b, a0, theory);
        }
    }
}

static SETUP: LazyLock<DolgopyatSetup> = LazyLock::new(|| {
    DolgopyatSetup::new(&preset("full2-nonlattice").unwrap(), ContractionConfig::new(20.0, 2)).unwrap()
});

fn random_j(choices: &[(usize, u8, usize)]) -> RepresentativeSet {
    let s = &*SETUP;
    let entries = (0..s.family.cylinders.len())
        .map(|m| {
            let subs: Vec<usize> = s.family.subcylinders_of(m).collect();
            let (j, i, ell) = choices[m % choices.len()];
            JEntry { i: i + 1, j: subs[j % subs.len()], ell: ell % s.pairs.len(), case: 1 }
        })
        .collect();
    RepresentativeSet { entries }
}

/// `H = exp(Σ_d amp θ^d r_d(u[..d]))`, a multiscale positive function on depth-K blocks.
fn multiscale(amp: f64, noise: &[f64]) -> Vec<f64> {
    let s = &*SETUP;
    let th = s.model.theta.get();
    s.index
        .words()
        .iter()
        .map(|w| {
            let mut acc = 0.0;
            let mut code = 1usize;
            for (d, &sym) in w.iter().enumerate() {
                code = code * 2 + sym as usize;
                acc += amp * th.powi(d as i32 + 1) * noise[code % noise.len()];
            }
            acc.exp()
        })
        .collect()
}

fn choice() -> impl Strategy<Value = Vec<(usize, u8, usize)>> {
    prop::collection::vec((0usize..4, 0u8..2, 0usize..2), 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn cone_is_preserved(amp in 0.0f64..3.0, noise in prop::collection::vec(-1.0f64..1.0, 1031), pick in choice()) {
        let s = &*SETUP;
        let e = s.params.e;
        let h = multiscale(amp, &noise);
        prop_assume!(s.k_e_check(&h, e).member);
        let j = random_j(&pick);
        let (_, nh) = s.omega_and_contract(&j, &h).unwrap();
        let r = s.k_e_check(&nh, e);
        prop_assert!(r.member, "worst ratio {} > E = {}", r.worst_ratio, e);
    }

    #[test]
    fn branch_ratio_bounds(amp in 0.0f64..3.0, noise in prop::collection::vec(-1.0f64..1.0, 1031)) {
        let s = &*SETUP;
        let h = multiscale(amp, &noise);
        prop_assume!(s.k_e_check(&h, s.params.e).member);
        for ell in 0..s.pairs.len() {
            for i in 1..=2u8 {
                for j in 0..s.family.subcylinders.len() {
                    let vals: Vec<f64> = s.branch_blocks(ell, i, j).iter().map(|&b| h[b]).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(0.0, f64::max);
                    prop_assert!(hi / lo <= 2.0 && lo / hi >= 0.5);
                }
            }
        }
    }

    #[test]
    fn cauchy_schwarz_step(h in prop::collection::vec(0.0f64..3.0, 512), pick in choice()) {
        let s = &*SETUP;
        let j = random_j(&pick);
        let (_, nh) = s.omega_and_contract(&j, &h).unwrap();
        let h2: Vec<f64> = h.iter().map(|x| x * x).collect();
        let mh2 = s.m_a.apply_power(&h2, s.params.n);
        for (x, y) in nh.iter().zip(&mh2) {
            prop_assert!(x * x <= y * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn omega_dip_on_marked_blocks(pick in choice()) {
        let s = &*SETUP;
        let j = random_j(&pick);
        let w = s.omega(&j).unwrap();
        let mw = s.m_a.apply_power(&w, s.params.n);
        let bound = 1.0 - s.params.mu0 * (-(s.params.n as f64) * s.t_const).exp();
        for u in s.marked_blocks(&j) {
            prop_assert!(mw[u] <= bound + 1e-15, "{} > {}", mw[u], bound);
        }
    }

    #[test]
    fn decay_invariant_random_start(vals in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4)) {
        let s = &*SETUP;
        let h0 = ComplexFn::from_values(
            ruellelab::BlockIndex::new(s.model.system.clone(), 2).unwrap(),
            vals.iter().map(|&(x, y)| c(x, y)).collect(),
        ).unwrap();
        let d = s.decay_experiment(&h0, 6).unwrap();
        prop_assert!(d.invariant_holds, "violation {}", d.max_violation);
    }
}

#[test]
fn zero_start_keeps_h_column_zero() {
    let s = &*SETUP;
    let zero = ComplexFn::constant(&s.model.system, 1, c(0.0, 0.0)).unwrap();
    let d = s.decay_experiment(&zero, 8).unwrap();
    assert!(d.rows.iter().all(|r| r.h_l2 == 0.0));
    let hs: Vec<f64> = d.rows.iter().filter_map(|r| r.big_h_l2).collect();
    assert_eq!(hs.len(), 9);
    assert!(hs.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn lattice_resonance_blocks_decay() {
    let m = preset("full2-lattice").unwrap();
    let s = DolgopyatSetup::new(&m, ContractionConfig::new(2.0 * std::f64::consts::PI, 2)).unwrap();
    let one = ComplexFn::constant(&m.system, 1, c(1.0, 0.0)).unwrap();
    let d = s.decay_experiment(&one, 10).unwrap();
    for r in &d.rows {
        assert!((r.h_l2 - 1.0).abs() < 1e-10, "{}", r.h_l2);
    }
    // H can only shrink, so domination has to give out at some step
    assert!(d.failure_step.is_some());
    assert!(d.failure.as_deref().unwrap().contains("oscillation insufficient"));
}

#[test]
fn mu0_to_zero_makes_rho3_exceed_one() {
    let m = preset("full2-nonlattice").unwrap();
    let mut cfg = ContractionConfig::new(20.0, 2);
    cfg.a = 0.05;
    cfg.mu0 = Some(1e-12);
    let s = DolgopyatSetup::new(&m, cfg).unwrap();
    let n = s.index.len();
    let j = s.build_j(&vec![c(1.0, 0.0); n], &vec![1.0; n]).unwrap();
    let nt = s.params.n as f64 * s.t_const;
    assert!((s.rho3(&j) - (0.05 * nt).exp()).abs() < 1e-6);
    let err = s.l2_contraction_check(&vec![1.0; n], &j).unwrap_err();
    assert!(err.to_string().contains("smaller a0"));
}
