//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruellelab::complexop::{self, ComplexTransfer};
use ruellelab::correlations::{self, HeightProfile, Observable};
use ruellelab::dolgopyat::{ContractionConfig, DolgopyatSetup, JEntry, RepresentativeSet};
use ruellelab::orbits;
use ruellelab::sft::{common_prefix, d_theta};
use ruellelab::transfer;
use ruellelab::{preset, random_model, BlockIndex, ComplexFn, RealFn, Result, SuspensionModel, PRESETS};

type Check = Result<(bool, String)>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn random_models() -> Vec<SuspensionModel> {
    (0..25u64)
        .map(|i| random_model(100 + i, 1 + (i as usize % 4), 1 + (i as usize / 4) % 3, 0.5).unwrap())
        .collect()
}

fn criterion_1() -> Check {
    let p2 = transfer::solve_p_f(&preset("full2-const")?.potential, &preset("full2-const")?.roof, 1e-14)?;
    let gm = preset("golden-mean-const")?;
    let pg = transfer::solve_p_f(&gm.potential, &gm.roof, 1e-14)?;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let (e2, eg) = ((p2 - 2f64.ln()).abs(), (pg - phi.ln()).abs());
    Ok((e2 <= 1e-10 && eg <= 1e-10, format!("|P-log2| = {e2:.1e}, |P-logφ| = {eg:.1e}")))
}

fn criterion_2() -> Check {
    let mut worst = [0.0f64; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for m in random_models() {
        let norm = transfer::normalize(&m, 0.0, 1e-14)?;
        let k = norm.depth();
        let stoch = norm.matrix(k)?;
        worst[0] = worst[0].max(max_abs(stoch.row_sums().iter().map(|s| s - 1.0)));

        let g = m.potential.refine(k)?.zip_with(&m.roof.refine(k)?, |f, t| f - norm.p_f * t)?;
        let mat = transfer::assemble_matrix(&g, k)?;
        let sd = transfer::rpf_data(&mat)?;
        let nu_hat = sd.eigenmeasure.values();
        let adj = mat.apply_adjoint(nu_hat);
        worst[1] = worst[1].max(max_abs(adj.iter().zip(nu_hat).map(|(a, b)| a - sd.lambda * b)));
        let ih: f64 = sd.eigenfunction.values().iter().zip(nu_hat).map(|(a, b)| a * b).sum();
        worst[2] = worst[2].max((ih - 1.0).abs());

        let nu = transfer::gibbs_from_normalized(&m.potential, &m.roof, &norm, k)?;
        let masses = nu.masses.values();
        for _ in 0..5 {
            let h: Vec<f64> = (0..stoch.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lh = stoch.apply(&h);
            let lhs: f64 = lh.iter().zip(masses).map(|(a, b)| a * b).sum();
            let rhs: f64 = h.iter().zip(masses).map(|(a, b)| a * b).sum();
            worst[3] = worst[3].max((lhs - rhs).abs());
        }
    }
    let pass = worst.iter().all(|&w| w <= 1e-12);
    Ok((
        pass,
        format!(
            "M1=1 {:.1e}, L*ν=λν {:.1e}, ∫h dν=1 {:.1e}, invariance {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn criterion_3() -> Check {
    let mut worst = 0.0f64;
    let mut certified = true;
    for m in random_models() {
        let nu = transfer::gibbs_measure(&m, 10, 1e-14)?;
        certified &= nu.c1 > 0.0 && nu.c1 <= nu.c2;
        let k0 = m.system.alphabet_size() as u8;
        for n in 1..10 {
            for w in m.system.admissible_words(n) {
                let w = w.symbols();
                let mass = nu.mass_of(w);
                let mut right = 0.0;
                let mut left = 0.0;
                for s in 0..k0 {
                    let mut ws = w.to_vec();
                    ws.push(s);
                    right += nu.mass_of(&ws);
                    let mut sw = vec![s];
                    sw.extend_from_slice(w);
                    left += nu.mass_of(&sw);
                }
                worst = worst.max((mass - right).abs()).max((mass - left).abs());
            }
        }
    }
    let bern = transfer::gibbs_measure(&preset("full2-const")?, 10, 1e-14)?;
    let mut bern_err = 0.0f64;
    for n in 1..=10 {
        for w in bern.masses.index().system().admissible_words(n) {
            bern_err = bern_err.max((bern.mass_of(w.symbols()) - 0.5f64.powi(n as i32)).abs());
        }
    }
    let parry = transfer::gibbs_measure(&preset("golden-mean-const")?, 2, 1e-14)?;
    let parry_err = (parry.mass_of(&[0]) - 0.7236068).abs();
    let pass = worst <= 1e-12 && certified && bern_err <= 1e-7 && parry_err <= 1e-7;
    Ok((
        pass,
        format!(
            "additivity/invariance {worst:.1e}, c1 ≤ c2 on all: {certified}, Bernoulli {bern_err:.1e}, Parry ν[0] err {parry_err:.1e}"
        ),
    ))
}

fn criterion_4() -> Check {
    let rc = complexop::contraction_scan(&preset("full2-const")?, 0.0, &[2.0 * PI, 4.0 * PI, 6.0 * PI])?;
    let rl = complexop::contraction_scan(&preset("full2-lattice")?, 0.0, &[2.0 * PI, 4.0 * PI])?;
    let lattice_err = max_abs(rc.iter().chain(&rl).map(|r| r.spectral_radius - 1.0));
    let grid: Vec<f64> = (0..500).map(|i| 0.5 + 49.5 * i as f64 / 499.0).collect();
    let rn = complexop::contraction_scan(&preset("full2-nonlattice")?, 0.0, &grid)?;
    let worst = rn.iter().map(|r| r.spectral_radius).fold(0.0, f64::max);
    let pass = lattice_err <= 1e-10 && rn.iter().all(|r| r.spectral_radius < 1.0);
    Ok((pass, format!("resonant |r-1| ≤ {lattice_err:.1e}; nonlattice max r = {worst:.6} over 500 b")))
}

fn criterion_5() -> Check {
    let m = preset("full2-nonlattice")?;
    let h0 = ComplexFn::from_fn(&m.system, 1, |w| c(1.0 + 0.5 * f64::from(w[0]), 0.0))?;
    let table = complexop::iterate_decay(&m, 0.0, 20.0, &h0, 1, 40)?;
    let r = complexop::spectral_radius(&complexop::assemble_complex(&m, 0.0, 20.0)?).radius;
    let rel = (table.rho / (r * r) - 1.0).abs();
    Ok((table.rho < 1.0 && rel <= 0.1, format!("ρ = {:.6}, r² = {:.6}, rel diff {rel:.3}", table.rho, r * r)))
}

fn criterion_6() -> Check {
    let m = preset("full2-nonlattice")?;
    let s = DolgopyatSetup::new(&m, ContractionConfig::new(20.0, 2))?;
    let n = s.index.len();
    let ones = vec![1.0; n];
    let h1 = vec![c(1.0, 0.0); n];
    let j = s.build_j(&h1, &ones)?;
    let dom = s.domination_check(&h1, &ones, &j)?;
    let l2 = s.l2_contraction_check(&ones, &j)?;
    let h0 = ComplexFn::constant(&m.system, 1, c(1.0, 0.0))?;
    let d = s.decay_experiment(&h0, 30)?;
    let decays = d.failure_step.is_none() && d.h_rate < 1.0 && d.big_h_rate < 1.0;
    let control = match DolgopyatSetup::new(&preset("full2-const")?, ContractionConfig::new(20.0, 2)) {
        Err(e) => e.to_string().contains("oscillation insufficient"),
        Ok(_) => false,
    };
    let pass = dom.pass && l2.pass && !l2.vacuous && d.invariant_holds && decays && control;
    Ok((
        pass,
        format!(
            "μ0 = {:.3e}, |J| = {}, domination {}, 1 - L² ratio {:.3e} ≥ 1 - ρ3 {:.3e}: {}, |h| ≤ H to m=30: {}, rates h {:.4} H {:.4}, constant-roof failure path: {control}",
            s.params.mu0,
            j.entries.len(),
            dom.pass,
            1.0 - l2.ratio,
            1.0 - l2.rho3,
            l2.pass,
            d.invariant_holds,
            d.h_rate,
            d.big_h_rate
        ),
    ))
}

fn criterion_7() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["full2-const", "golden-mean-const", "full2-nonlattice"] {
        let m = preset(name)?;
        let h_t = orbits::topological_entropy(&m, 1e-14)?.h_t;
        let s = c(h_t + 0.5, 0.0);
        let e = orbits::zeta_euler(&m, s, 25)?;
        let d = orbits::zeta_det(&m, s)?;
        let diff = (e.log_value - d.value.ln()).norm();
        let tol = 1e-6f64.max(e.tail_bound);
        let pole = orbits::zeta_det(&m, c(h_t, 0.0))?.det.norm();
        pass &= diff <= tol && pole <= 1e-10;
        notes.push(format!("{name}: Δlog {diff:.1e} (tol {tol:.1e}), |det| at h_T {pole:.1e}"));
    }
    Ok((pass, notes.join("; ")))
}

fn criterion_8() -> Check {
    let mut worst = 0.0f64;
    let mut mobius_ok = true;
    for name in PRESETS {
        let m = preset(name)?;
        let h_t = orbits::topological_entropy(&m, 1e-14)?.h_t;
        for s in [c(h_t + 0.5, 0.0), c(1.0, 1.0)] {
            for n in 1..=10 {
                let tr = orbits::trace_power(&m, s, n)?;
                let direct = orbits::periodic_sum(&m, s, n);
                worst = worst.max((tr - direct).norm() / direct.norm().max(f64::MIN_POSITIVE));
            }
        }
        let orbs = orbits::primitive_orbits(&m, 10)?;
        for n in 1..=10 {
            let count = orbs.iter().filter(|o| o.n == n).count() as i128;
            mobius_ok &= count == orbits::primitive_count_mobius(&m.system, n);
        }
    }
    Ok((worst <= 1e-10 && mobius_ok, format!("max relative trace error {worst:.1e}, Möbius exact: {mobius_ok}")))
}

fn criterion_9() -> Check {
    let m = preset("full2-nonlattice")?;
    let orbs = orbits::primitive_orbits(&m, 22)?;
    let h_t = orbits::topological_entropy(&m, 1e-14)?.h_t;
    // every orbit of period ≤ 22 τ_min has word length ≤ 22
    let lmax = 22.0 * m.roof.min_value();
    let rows = orbits::pnt_from_orbits(&orbs, h_t, lmax, 44)?;
    let far = rows.last().unwrap();
    let half = &rows[21];
    let li10 = orbits::li(10.0)?;
    let pass = (far.ratio - 1.0).abs() < (half.ratio - 1.0).abs() && (li10 - 5.12044).abs() <= 1e-4;
    Ok((
        pass,
        format!(
            "{} orbits; ratio {:.5} at λ = {:.1}, {:.5} at λ = {:.1}; li(10) = {li10:.6}",
            orbs.len(),
            far.ratio,
            far.lambda,
            half.ratio,
            half.lambda
        ),
    ))
}

fn criterion_10() -> Check {
    let m = preset("full2-nonlattice")?;
    let a = Observable::symbolic(RealFn::from_fn(&m.system, 1, |w| f64::from(w[0] == 1))?).centered(&m)?;
    let grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.1).collect();
    let table = correlations::correlation(&m, &a, &a, &grid, 10_000_000, 1)?;
    let env = correlations::fit_decay_envelope(&table)?;
    let plain = correlations::fit_decay_rate(&table).map(|f| format!("{:.3} (R² {:.2})", f.c, f.r2));
    let exact = correlations::exact_covariance(&m, &a, &a)?;
    let c0_ok = (table.c_values[0] - exact).abs() <= 3.0 * table.stderr[0];

    let k = preset("full2-const")?;
    let tent = HeightProfile::new(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)])?;
    let b = Observable::new(RealFn::from_fn(&k.system, 1, |w| 1.0 + f64::from(w[0]))?, tent).centered(&k)?;
    let ctrl = correlations::correlation(&k, &b, &b, &grid, 10_000_000, 1)?;
    let (control_ok, control_note) = match correlations::fit_decay_rate(&ctrl) {
        Ok(f) => (f.c < 3.0 * f.c_stderr, format!("c = {:.3} ± {:.3}", f.c, f.c_stderr)),
        Err(e) => (true, e.to_string()),
    };
    let pass = env.c > 0.0 && env.r2 >= 0.8 && c0_ok && control_ok;
    Ok((
        pass,
        format!(
            "envelope c = {:.3} (R² {:.3}, {} peaks), plain fit {}; C(0) = {:.6} vs exact {exact:.6} (se {:.1e}); constant-roof control: {control_note}",
            env.c,
            env.r2,
            env.points,
            plain.unwrap_or_else(|e| e.to_string()),
            table.c_values[0],
            table.stderr[0]
        ),
    ))
}

/// Smallest Lasota–Yorke constant over pairs in a common 1-cylinder and `m ≤ 6`.
fn minimal_a0(m: &SuspensionModel, b: f64, h: &[Complex64], big_h: &[f64]) -> Result<f64> {
    let norm = transfer::normalize(m, 0.0, 1e-14)?;
    let k = norm.depth() + 1;
    let ma = norm.matrix(k)?;
    let lab = ComplexTransfer::from_normalized(&norm, &m.roof, b, k)?;
    let words = ma.index().words();
    let th = m.theta;
    let n = ma.len();
    let mut bb = 0.0f64;
    for v in 0..n {
        for w in 0..n {
            let l = common_prefix(&words[v], &words[w]);
            if l >= 1 && l < k {
                bb = bb.max((h[v] - h[w]).norm() / (big_h[w] * th.pow(l)));
            }
        }
    }
    let (mut lh, mut mh) = (h.to_vec(), big_h.to_vec());
    let mut mabs: Vec<f64> = h.iter().map(|z| z.norm()).collect();
    let mut a0 = 0.0f64;
    for step in 1..=6 {
        lh = lab.matrix.apply(&lh);
        mh = ma.apply(&mh);
        mabs = ma.apply(&mabs);
        for u in 0..n {
            for u2 in 0..n {
                let l = common_prefix(&words[u], &words[u2]);
                if l >= 1 && l < k {
                    let rhs = (bb * th.pow(step) * mh[u2] + b.abs() * mabs[u2]) * th.pow(l);
                    a0 = a0.max((lh[u] - lh[u2]).norm() / rhs);
                }
            }
        }
    }
    Ok(a0)
}

fn criterion_11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let th = ruellelab::Theta::new(0.5)?;
    let mut ok = Vec::new();

    let mut ultra = true;
    for _ in 0..5000 {
        let xs: Vec<u8> = (0..24).map(|_| rng.gen_range(0..3)).collect();
        let d = |a: &[u8], b: &[u8]| d_theta(a, b, th).unwrap();
        ultra &= d(&xs[..8], &xs[16..]) <= d(&xs[..8], &xs[8..16]).max(d(&xs[8..16], &xs[16..]));
    }
    ok.push(("ultrametric", ultra));

    let mut cocycle = true;
    let mut refine = true;
    for m in random_models().iter().take(10) {
        let f = &m.roof;
        let len = 7 + f.depth();
        for w in m.system.admissible_words(len).iter().step_by(7) {
            let w = w.symbols();
            let lhs = f.birkhoff_sum(w, 7)?;
            let rhs = f.birkhoff_sum(w, 3)? + f.birkhoff_sum(&w[3..], 4)?;
            cocycle &= (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs());
        }
        refine &= f.refine(f.depth() + 2)?.theta_seminorm(m.theta) == f.theta_seminorm(m.theta);
    }
    ok.push(("Birkhoff cocycle", cocycle));
    ok.push(("seminorm refinement", refine));

    let mut ly = true;
    for seed in 0..5u64 {
        let m = random_model(seed, 2, 2, 0.5)?;
        let norm = transfer::normalize(&m, 0.0, 1e-14)?;
        let n = BlockIndex::new(m.system.clone(), norm.depth() + 1)?.len();
        let h: Vec<Complex64> = (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let big: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let x = m.theta.get();
        let fs = norm.fa.theta_seminorm(m.theta);
        let ts = m.roof.theta_seminorm(m.theta);
        let bound = (fs * x / (1.0 - x)).exp() * 1f64.max((fs + ts) * x / (1.0 - x));
        for b in [1.0, 10.0, 100.0] {
            ly &= minimal_a0(&m, b, &h, &big)? <= bound * (1.0 + 1e-9);
        }
    }
    ok.push(("Lasota-Yorke A0 bounded", ly));

    let s = DolgopyatSetup::new(&preset("full2-nonlattice")?, ContractionConfig::new(20.0, 2))?;
    let x = s.model.theta.get();
    let words = s.index.words();
    let random_h = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let amp = rng.gen_range(0.0..3.0);
        let noise: Vec<f64> = (0..1031).map(|_| rng.gen_range(-1.0..1.0)).collect();
        words
            .iter()
            .map(|w| {
                let mut acc = 0.0;
                let mut code = 1usize;
                for (d, &sym) in w.iter().enumerate() {
                    code = code * 2 + sym as usize;
                    acc += amp * x.powi(d as i32 + 1) * noise[code % noise.len()];
                }
                f64::exp(acc)
            })
            .collect()
    };
    let random_j = |rng: &mut ChaCha8Rng| RepresentativeSet {
        entries: (0..s.family.cylinders.len())
            .map(|m| {
                let subs: Vec<usize> = s.family.subcylinders_of(m).collect();
                JEntry {
                    i: rng.gen_range(1..=2),
                    j: subs[rng.gen_range(0..subs.len())],
                    ell: rng.gen_range(0..s.pairs.len()),
                    case: 1,
                }
            })
            .collect(),
    };
    let (mut accepted, mut preserved) = (0, 0);
    for _ in 0..10_000 {
        if accepted == 50 {
            break;
        }
        let h = random_h(&mut rng);
        if !s.k_e_check(&h, s.params.e).member {
            continue;
        }
        accepted += 1;
        let (_, nh) = s.omega_and_contract(&random_j(&mut rng), &h)?;
        preserved += usize::from(s.k_e_check(&nh, s.params.e).member);
    }
    ok.push(("K_E preserved", accepted == 50 && preserved == 50));

    let mut cs = true;
    for _ in 0..50 {
        let h: Vec<f64> = (0..words.len()).map(|_| rng.gen_range(0.0..3.0)).collect();
        let (_, nh) = s.omega_and_contract(&random_j(&mut rng), &h)?;
        let h2: Vec<f64> = h.iter().map(|v| v * v).collect();
        let rhs = s.m_a.apply_power(&h2, s.params.n);
        cs &= nh.iter().zip(&rhs).all(|(a, b)| a * a <= b * (1.0 + 1e-12));
    }
    ok.push(("Cauchy-Schwarz", cs));

    let pass = ok.iter().all(|(_, p)| *p);
    let detail = ok.iter().map(|(n, p)| format!("{n}: {p}")).collect::<Vec<_>>().join(", ");
    Ok((pass, format!("{detail} (K_E: {preserved}/{accepted})")))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Check); 11] = [
        ("pressure exactness", 1.0, criterion_1),
        ("RPF identities", 10.0, criterion_2),
        ("Gibbs structure", 30.0, criterion_3),
        ("lattice/nonlattice dichotomy", 60.0, criterion_4),
        ("decay iteration", 10.0, criterion_5),
        ("contraction pipeline", 120.0, criterion_6),
        ("zeta cross-validation", 30.0, criterion_7),
        ("trace identity", 10.0, criterion_8),
        ("prime orbit trend", 300.0, criterion_9),
        ("correlation decay", 600.0, criterion_10),
        ("property suites", 60.0, criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok((p, d)) => (p && secs < *limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name} [{secs:.2} s, limit {limit} s] {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
