use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruellelab"))
        .args(args)
        .output()
        .expect("spawn ruellelab")
}

fn json_ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn num(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

#[test]
fn pressure_closed_forms() {
    let v = json_ok(&["pressure", "--preset", "full2-const"]);
    assert!((num(&v["result"]["P_f"]) - 2f64.ln()).abs() < 1e-12);
    assert_eq!(v["tool"], "ruellelab");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["params"]["source"]["preset"], "full2-const");
    let v = json_ok(&["pressure", "--preset", "golden-mean-const"]);
    assert!((num(&v["result"]["P_f"]) - 0.481_211_825_059_603_5).abs() < 1e-12);
}

#[test]
fn pressure_inline_potential() {
    let v = json_ok(&["pressure", "--preset", "full2-const", "--potential", r#"{"depth":1,"values":[0.0,1.0]}"#]);
    let expected = (1.0 + 1f64.exp()).ln();
    assert!((num(&v["result"]["P_f"]) - expected).abs() < 1e-12);
}

#[test]
fn malformed_model_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"alphabet_size\": 2,\n  ]\n}").unwrap();
    let out = run(&["pressure", "--model", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3, column 3"), "{err}");
}

#[test]
fn export_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    let p2 = dir.path().join("m2.json");
    assert!(run(&["export", "--preset", "full2-nonlattice", "--out", p.to_str().unwrap()]).status.success());
    assert!(run(&["export", "--model", p.to_str().unwrap(), "--out", p2.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    let v = json_ok(&["pressure", "--model", p.to_str().unwrap()]);
    assert_eq!(v["params"]["label"], "full2-nonlattice");
}

#[test]
fn scan_outputs() {
    let out = run(&["scan", "--preset", "full2-const", "--bmin", "1", "--bmax", "10", "--steps", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("b,spectral_radius,gap,second_modulus"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-10));
    assert_eq!(run(&["scan", "--preset", "full2-const", "--steps", "0"]).status.code(), Some(2));
}

#[test]
fn count_and_zeta_examples() {
    let v = json_ok(&["count", "--preset", "full2-const", "--lambda-max", "4.5", "--shells", "1"]);
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.last().unwrap()["pi"], 8);
    let s = 4f64.ln().to_string();
    let v = json_ok(&["zeta", "--preset", "full2-const", "--s", &s]);
    let euler = &v["result"]["euler"];
    let log_re = num(&euler["log_value"][0]);
    assert!((log_re - 2f64.ln()).abs() <= num(&euler["tail_bound"]).max(1e-12), "{log_re}");
    assert!((num(&v["result"]["det"]["value"][0]) - 2.0).abs() < 1e-12);
}

#[test]
fn orbits_counts_agree() {
    let v = json_ok(&["orbits", "--preset", "golden-mean-const", "--n-max", "8"]);
    for c in v["result"]["counts"].as_array().unwrap() {
        assert_eq!(c["enumerated"], c["mobius"]);
    }
}

#[test]
fn dolgopyat_constant_roof_exits_3() {
    let out = run(&["dolgopyat", "--preset", "full2-const", "--b", "20"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oscillation insufficient"));
}

#[test]
fn dolgopyat_nonlattice_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("decay.csv");
    let v = json_ok(&[
        "dolgopyat", "--preset", "full2-nonlattice", "--b", "20", "--N", "2", "--m-max", "5",
        "--csv", csv.to_str().unwrap(),
    ]);
    let r = &v["result"];
    assert_eq!(r["uni_certificate"]["pass"], true);
    assert_eq!(r["domination"]["pass"], true);
    assert_eq!(r["l2_contraction"]["pass"], true);
    assert_eq!(r["decay"]["invariant_holds"], true);
    assert!(num(&v["params"]["mu0"]) > 0.0);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn corr_is_reproducible() {
    let args = ["corr", "--preset", "full2-nonlattice", "--t-max", "1", "--dt", "0.5", "--samples", "20000", "--seed", "9"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let c0 = num(&v["result"]["table"]["c_values"][0]);
    let se = num(&v["result"]["table"]["stderr"][0]);
    assert!((c0 - num(&v["result"]["exact_c0"])).abs() < 4.0 * se);
}

#[test]
fn unknown_preset_and_thread_env() {
    let out = run(&["pressure", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("full2-lattice"));
    let out = Command::new(env!("CARGO_BIN_EXE_ruellelab"))
        .args(["pressure", "--preset", "full2-const"])
        .env("RUELLELAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_ruellelab"))
        .args(["presets"])
        .env("RUELLELAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
