use std::process::{Command, Output};

use serde_json::Value;

fn paneitz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paneitz")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn sphere_spectrum() {
    let out = paneitz(&["spectrum", "--backend", "sphere", "--max-degree", "3", "--count", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_of(&out);
    let eigs = floats(&doc["result"]["eigenvalues"]);
    let expected = [0.0, 24.0, 24.0, 24.0, 24.0, 24.0, 120.0];
    for (a, b) in eigs.iter().zip(expected) {
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["artifact_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(doc["seed"], 0);
}

#[test]
fn torus_spectrum() {
    let out = paneitz(&["spectrum", "--backend", "torus", "--max-freq", "1", "--count", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let eigs = floats(&json_of(&out)["result"]["eigenvalues"]);
    let l = 16.0 * std::f64::consts::PI.powi(4);
    assert!(eigs[0].abs() < 1e-9);
    assert!(eigs[1..].iter().all(|e| (e - l).abs() < 1e-9 * l));
}

#[test]
fn empty_spectrum() {
    let out = paneitz(&["spectrum", "--count", "0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json_of(&out)["result"]["eigenvalues"].as_array().unwrap().is_empty());
}

#[test]
fn quadrupole_derivative() {
    let out = paneitz(&["derivative", "--k", "2", "--direction", "x1^2-x2^2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json_of(&out)["result"];
    assert!((r["d_plus"].as_f64().unwrap() + 48.0 / 7.0).abs() < 1e-9);
    assert!((r["d_minus"].as_f64().unwrap() - 48.0 / 7.0).abs() < 1e-9);
}

#[test]
fn balance_zero_is_identity() {
    let out = paneitz(&["balance", "--w", "zero"]);
    assert_eq!(out.status.code(), Some(0));
    let p = &json_of(&out)["result"]["params"];
    assert_eq!(p["dilation"].as_f64(), Some(1.0));
    assert_eq!(floats(&p["center"]), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn verify_sphere() {
    let out = paneitz(&["verify", "--backend", "sphere", "--max-degree", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json_of(&out)["result"]["all_passed"], true);
}

#[test]
fn extremal_exit_codes() {
    let ok = paneitz(&["extremal", "--backend", "torus", "--k", "2"]);
    assert_eq!(ok.status.code(), Some(0));
    let r = &json_of(&ok)["result"];
    assert_eq!(r["certificate"]["certified"], true);
    assert_eq!(r["opposite_signs"], true);
    let fail = paneitz(&["extremal", "--w", "random:0.3", "--seed", "5"]);
    assert_eq!(fail.status.code(), Some(4));
    assert_eq!(json_of(&fail)["result"]["certificate"]["certified"], false);
}

#[test]
fn maximize_trajectory_csv() {
    let out = paneitz(&["maximize", "--w", "0.2*x1", "--steps", "20", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# schema_version=1\n"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "step,lambda_k,normalized,step_size,direction_id,accepted");
    let values: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|p| p[1] >= p[0]));
}

#[test]
fn error_exit_codes() {
    assert_eq!(paneitz(&["spectrum", "--backend", "cube"]).status.code(), Some(2));
    assert_eq!(paneitz(&["spectrum", "--count", "999"]).status.code(), Some(2));
    assert_eq!(paneitz(&["spectrum", "--backend", "torus", "--max-degree", "2"]).status.code(), Some(2));
    assert_eq!(paneitz(&["derivative", "--direction", "x1^2"]).status.code(), Some(2));
    assert_eq!(paneitz(&["derivative"]).status.code(), Some(2));
    assert_eq!(paneitz(&["spectrum", "--w", "x7"]).status.code(), Some(2));
    assert_eq!(paneitz(&["spectrum", "--tol", "-1"]).status.code(), Some(2));
    assert_eq!(paneitz(&["balance", "--backend", "torus"]).status.code(), Some(2));
    // e^{4w} spans e^{±160}: the mass matrix is too ill-conditioned to solve.
    assert_eq!(paneitz(&["spectrum", "--w", "40*x1"]).status.code(), Some(3));
    assert_eq!(paneitz(&["spectrum", "--w", "200*x1"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let args = ["extremal", "--seed", "9", "--count", "5"];
    let a = paneitz(&args);
    let b = paneitz(&args);
    assert_eq!(a.stdout, b.stdout);
    let c = paneitz(&["extremal", "--seed", "10", "--count", "5"]);
    assert_ne!(json_of(&a)["config_hash"], json_of(&c)["config_hash"]);
}

#[test]
fn config_file_and_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["derivative", "--direction", "x1^2-x3^2", "--w", "0.1*x2", "--seed", "3"];
    let mut print = flags.to_vec();
    print.push("--print-config");
    let config = paneitz(&print);
    assert_eq!(config.status.code(), Some(0));
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, &config.stdout).unwrap();

    let direct = paneitz(&flags);
    let loaded = paneitz(&["derivative", "--config", config_path.to_str().unwrap()]);
    assert_eq!(direct.stdout, loaded.stdout);
    assert_eq!(paneitz(&["spectrum", "--config", config_path.to_str().unwrap()]).status.code(), Some(2));

    let out_dir = dir.path().join("results");
    let mut with_out = flags.to_vec();
    with_out.extend(["--out", out_dir.to_str().unwrap(), "--format", "csv"]);
    let written = paneitz(&with_out);
    assert_eq!(written.status.code(), Some(0));
    assert!(written.stdout.is_empty());
    let text = std::fs::read_to_string(out_dir.join("derivative.csv")).unwrap();
    assert!(text.contains("branch,derivative"));
}

#[test]
fn coefficient_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = vec![0.0; 20];
    c[1] = 0.1;
    let path = dir.path().join("w.json");
    std::fs::write(&path, serde_json::json!({ "coefficients": c }).to_string()).unwrap();
    let out = paneitz(&["spectrum", "--w", path.to_str().unwrap(), "--count", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json_of(&out);
    assert_eq!(floats(&doc["config"]["w"]["coefficients"]), c);
    assert!(floats(&doc["result"]["eigenvalues"])[1] < 24.0);

    std::fs::write(&path, "[1.0, 2.0]").unwrap();
    assert_eq!(paneitz(&["spectrum", "--w", path.to_str().unwrap()]).status.code(), Some(2));
}
