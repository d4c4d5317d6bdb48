use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::json;

use ruellelab::complexop::{self, ROOT_TOL};
use ruellelab::correlations::{self, CorrelationOptions, HeightProfile, Observable};
use ruellelab::dolgopyat::{ContractionConfig, DolgopyatSetup};
use ruellelab::io::{self, FnTable, Report};
use ruellelab::orbits;
use ruellelab::transfer;
use ruellelab::{preset, ComplexFn, Error, RealFn, SuspensionModel, PRESETS};

#[derive(Parser)]
#[command(name = "ruellelab", version, about = "Transfer operators, zeta functions and decay of correlations for symbolic suspension flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model JSON file
    #[arg(long, conflicts_with = "preset")]
    model: Option<PathBuf>,
    /// Built-in model name
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Pressure root P_f, entropy h_T and RPF summary
    Pressure {
        #[command(flatten)]
        model: ModelArgs,
        /// Replacement potential: inline `{"depth":..,"values":[..]}` or a path to one
        #[arg(long)]
        potential: Option<String>,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
    },
    /// Spectral radius of L_ab over a b grid (CSV)
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 0.5)]
        bmin: f64,
        #[arg(long, default_value_t = 50.0)]
        bmax: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Primitive periodic orbits up to word length n-max
    Orbits {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ruelle zeta function by Euler product and by determinant
    Zeta {
        #[command(flatten)]
        model: ModelArgs,
        /// Real part of s
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        s_im: f64,
        #[arg(long, default_value_t = 25)]
        n_max: usize,
    },
    /// Prime orbit counts against li(e^{h_T λ})
    Count {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long, default_value_t = 10)]
        shells: usize,
    },
    /// Monte-Carlo flow correlations and decay fit
    Corr {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 6.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        replicas: usize,
        /// `symbol` (indicator of x0 = 1) or `tent` ((1 + x0) times a unit tent in height)
        #[arg(long, default_value = "symbol")]
        observable: String,
        /// CSV of the correlation table
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contraction-operator pipeline: UNI certificate, J, domination, L² check, decay
    Dolgopyat {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long = "N", default_value_t = 2)]
        n: usize,
        /// `auto` or a value in (0, 1/2]
        #[arg(long, default_value = "auto")]
        mu0: String,
        #[arg(long, default_value_t = 0.5)]
        epsilon1: f64,
        #[arg(long, default_value_t = 1)]
        q1: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, default_value_t = 30)]
        m_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV mirror of the decay table
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a model as JSON
    Export {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in models
    Presets,
}

enum CliError {
    Validation(String),
    Numerical(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("RUELLELAB_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: RUELLELAB_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn load(args: &ModelArgs) -> CliResult<SuspensionModel> {
    match (&args.model, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            Ok(io::parse_model(&text)?)
        }
        (None, Some(name)) => Ok(preset(name)?),
        (None, None) => Err(CliError::Validation("give --model PATH or --preset NAME".into())),
    }
}

fn source(args: &ModelArgs) -> serde_json::Value {
    match (&args.model, &args.preset) {
        (Some(p), _) => json!({ "model": p.display().to_string() }),
        (None, Some(n)) => json!({ "preset": n }),
        _ => json!(null),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn report<P: serde::Serialize, R: serde::Serialize>(command: &str, params: &P, result: &R) -> String {
    let mut s = io::to_json_string(&Report::new(command, params, result));
    s.push('\n');
    s
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Pressure { model, potential, tol } => {
            let mut m = load(&model)?;
            if let Some(p) = &potential {
                let text = if p.trim_start().starts_with('{') {
                    p.clone()
                } else {
                    fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{p}: {e}")))?
                };
                let table: FnTable = serde_json::from_str(&text).map_err(|e| {
                    CliError::Validation(format!(
                        "malformed potential JSON at line {}, column {}: {e}",
                        e.line(),
                        e.column()
                    ))
                })?;
                let f = table.to_fn(&m.system, "potential")?;
                m = SuspensionModel::new(m.roof.clone(), f, m.theta, m.label.clone())?;
            }
            if !(tol > 0.0) {
                return Err(CliError::Validation("tol must be positive".into()));
            }
            let p_f = transfer::solve_p_f(&m.potential, &m.roof, tol)?;
            let h_t = orbits::topological_entropy(&m, tol)?;
            let norm = transfer::normalize_with(&m.potential, &m.roof, p_f, 0.0, m.work_depth())?;
            let nu = transfer::gibbs_from_normalized(&m.potential, &m.roof, &norm, norm.depth())?;
            let result = json!({
                "P_f": p_f,
                "h_T": h_t.h_t,
                "h_T_residual": h_t.residual,
                "rpf": io::SpectralJson::from(&norm.spectral),
                "stochastic_residual": norm.stochastic_residual,
                "gibbs": io::GibbsJson::from(&nu),
                "roof_warning": m.roof_warning(),
            });
            let params = json!({ "source": source(&model), "label": m.label, "potential": potential, "tol": tol });
            emit(None, &report("pressure", &params, &result))
        }
        Command::Scan { model, a, bmin, bmax, steps, out } => {
            if steps == 0 {
                return Err(CliError::Validation("steps must be at least 1".into()));
            }
            if !(bmax >= bmin) || !bmin.is_finite() || !bmax.is_finite() {
                return Err(CliError::Validation("need finite bmin <= bmax".into()));
            }
            let m = load(&model)?;
            let grid: Vec<f64> = if steps == 1 {
                vec![bmin]
            } else {
                (0..steps)
                    .map(|i| bmin + (bmax - bmin) * i as f64 / (steps - 1) as f64)
                    .collect()
            };
            let rows = complexop::contraction_scan(&m, a, &grid)?;
            let csv = io::csv_string(
                &["b", "spectral_radius", "gap", "second_modulus"],
                rows.iter().map(|r| vec![r.b, r.spectral_radius, r.gap, r.second_modulus]),
            );
            emit(out.as_deref(), &csv)?;
            if out.is_some() {
                let max = rows.iter().map(|r| r.spectral_radius).fold(0.0, f64::max);
                let params = json!({ "source": source(&model), "label": m.label, "a": a, "bmin": bmin, "bmax": bmax, "steps": steps });
                emit(None, &report("scan", &params, &json!({ "rows": rows.len(), "max_radius": max })))?;
            }
            Ok(())
        }
        Command::Orbits { model, n_max, out } => {
            if n_max == 0 {
                return Err(CliError::Validation("n-max must be at least 1".into()));
            }
            let m = load(&model)?;
            let list = orbits::primitive_orbits(&m, n_max)?;
            let counts: Vec<serde_json::Value> = (1..=n_max)
                .map(|n| {
                    json!({
                        "n": n,
                        "enumerated": list.iter().filter(|o| o.n == n).count(),
                        "mobius": orbits::primitive_count_mobius(&m.system, n) as i64,
                    })
                })
                .collect();
            let params = json!({ "source": source(&model), "label": m.label, "n_max": n_max });
            let result = json!({ "counts": counts, "orbits": list });
            emit(out.as_deref(), &report("orbits", &params, &result))
        }
        Command::Zeta { model, s, s_im, n_max } => {
            let m = load(&model)?;
            let s = Complex64::new(s, s_im);
            let det = orbits::zeta_det(&m, s)?;
            let euler = orbits::zeta_euler(&m, s, n_max);
            let h_t = orbits::topological_entropy(&m, ROOT_TOL)?.h_t;
            let euler_json = match &euler {
                Ok(e) => json!(e),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let params = json!({ "source": source(&model), "label": m.label, "s": [s.re, s.im], "n_max": n_max });
            let result = json!({ "h_T": h_t, "det": det, "euler": euler_json });
            emit(None, &report("zeta", &params, &result))
        }
        Command::Count { model, lambda_max, shells } => {
            let m = load(&model)?;
            let r = orbits::pnt_report(&m, lambda_max, shells)?;
            let params = json!({ "source": source(&model), "label": m.label, "lambda_max": lambda_max, "shells": shells });
            emit(None, &report("count", &params, &r))
        }
        Command::Corr {
            model,
            t_max,
            dt,
            samples,
            seed,
            replicas,
            observable,
            out,
        } => {
            if !(dt > 0.0) || !(t_max >= 0.0) {
                return Err(CliError::Validation("need dt > 0 and t-max >= 0".into()));
            }
            let m = load(&model)?;
            let obs = match observable.as_str() {
                "symbol" => Observable::symbolic(RealFn::from_fn(&m.system, 1, |w| f64::from(w[0] == 1))?),
                "tent" => Observable::new(
                    RealFn::from_fn(&m.system, 1, |w| 1.0 + f64::from(w[0]))?,
                    HeightProfile::new(vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)])?,
                ),
                other => return Err(CliError::Validation(format!("unknown observable '{other}'; use symbol or tent"))),
            }
            .centered(&m)?;
            let steps = (t_max / dt + 1e-9).floor() as usize;
            let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
            let opts = CorrelationOptions { replicas, ..CorrelationOptions::default() };
            let table = correlations::correlation_with(&m, &obs, &obs, &grid, samples, seed, opts)?;
            let exact_c0 = correlations::exact_covariance(&m, &obs, &obs)?;
            let fit = |f: fn(&correlations::CorrelationTable) -> ruellelab::Result<correlations::DecayFit>| match f(&table) {
                Ok(v) => json!(v),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let result = json!({
                "exact_c0": exact_c0,
                "fit": fit(correlations::fit_decay_rate),
                "envelope_fit": fit(correlations::fit_decay_envelope),
                "table": table,
            });
            if let Some(p) = &out {
                let csv = io::csv_string(
                    &["t", "C", "stderr"],
                    (0..grid.len()).map(|i| vec![table.t_grid[i], table.c_values[i], table.stderr[i]]),
                );
                fs::write(p, csv)?;
            }
            let params = json!({
                "source": source(&model), "label": m.label, "t_max": t_max, "dt": dt,
                "samples": samples, "seed": seed, "replicas": replicas, "observable": observable,
            });
            emit(None, &report("corr", &params, &result))
        }
        Command::Dolgopyat {
            model,
            b,
            n,
            mu0,
            epsilon1,
            q1,
            a,
            m_max,
            out,
            csv,
        } => {
            let m = load(&model)?;
            let mut cfg = ContractionConfig::new(b, n);
            cfg.epsilon1 = epsilon1;
            cfg.q1 = q1;
            cfg.a = a;
            cfg.mu0 = match mu0.as_str() {
                "auto" => None,
                v => Some(v.parse::<f64>().map_err(|_| CliError::Validation(format!("mu0 must be 'auto' or a number, got '{v}'")))?),
            };
            let setup = DolgopyatSetup::new(&m, cfg)?;
            let nb = setup.index.len();
            let ones = vec![1.0; nb];
            let h1 = vec![Complex64::new(1.0, 0.0); nb];
            let j = setup.build_j(&h1, &ones)?;
            let dom = setup.domination_check(&h1, &ones, &j)?;
            let l2 = setup.l2_contraction_check(&ones, &j)?;
            let h0 = ComplexFn::constant(&m.system, 1, Complex64::new(1.0, 0.0))?;
            let decay = setup.decay_experiment(&h0, m_max)?;
            if let Some(p) = &csv {
                let text = io::csv_string(
                    &["m", "H_l2", "h_l2"],
                    decay
                        .rows
                        .iter()
                        .map(|r| vec![r.m as f64, r.big_h_l2.unwrap_or(f64::NAN), r.h_l2]),
                );
                fs::write(p, text)?;
            }
            let params = json!({
                "source": source(&model), "label": m.label, "b": b, "N": n, "mu0": setup.params.mu0,
                "mu0_source": mu0, "epsilon1": epsilon1, "q1": q1, "a": a, "E": setup.params.e,
                "theta2": setup.theta2.get(), "m_max": m_max, "T": setup.t_const, "block_depth": setup.block_depth,
            });
            let result = json!({
                "cylinders": setup.family.cylinders.len(),
                "subcylinders": setup.family.subcylinders.len(),
                "coarse": setup.family.coarse,
                "branch_pairs": setup.pairs,
                "uni_certificate": setup.uni,
                "J": j,
                "domination": dom,
                "l2_contraction": l2,
                "decay": decay,
            });
            emit(out.as_deref(), &report("dolgopyat", &params, &result))
        }
        Command::Export { model, out } => {
            let m = load(&model)?;
            let mut text = io::model_to_json(&m);
            text.push('\n');
            emit(out.as_deref(), &text)
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(())
        }
    }
}
