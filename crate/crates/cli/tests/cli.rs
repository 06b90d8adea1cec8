use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn exp(rate: f64) -> Value {
    json!({"family": "exponential", "params": {"rate": rate}})
}

fn model(arrival: Value, services: Vec<Value>) -> Value {
    json!({"arrival": {"kind": "single", "law": arrival}, "services": services})
}

fn mm2() -> Value {
    model(exp(0.7), vec![exp(0.5), exp(0.5)])
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn qa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qa"))
        .args(args)
        .env_remove("QA_THREADS")
        .output()
        .unwrap()
}

fn run(cfg: &Value, cmd: &[&str]) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), cfg);
    let out = dir.path().join("out");
    let mut args = vec!["--config", &path, "--out", out.to_str().unwrap()];
    args.extend_from_slice(cmd);
    let o = qa(&args);
    (dir, o)
}

fn csv(dir: &TempDir, name: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.path().join("out").join(name)).unwrap();
    text.lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn rates_grid_has_one_row_per_theta() {
    let cfg = json!({"model": mm2(), "rates": {"theta": {"start": -1.0, "stop": 1.0, "step": 0.05}}});
    let (dir, o) = run(&cfg, &["rates"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["rates_eta_0.csv", "rates_zeta_0.csv", "rates_zeta_1.csv"] {
        let rows = csv(&dir, name);
        assert_eq!(rows[0], ["theta", "value", "trunc", "kind", "residual", "status"]);
        assert_eq!(rows.len(), 42, "{name}");
        assert!(rows[1..].iter().all(|r| r[5] == "ok"));
    }
    // η(θ) = λ(1 − e^θ) for exponential arrivals.
    let rows = csv(&dir, "rates_eta_0.csv");
    for r in &rows[1..] {
        let theta: f64 = r[0].parse().unwrap();
        let value: f64 = r[1].parse().unwrap();
        assert!((value - 0.7 * -theta.exp_m1()).abs() < 1e-12);
    }
}

#[test]
fn rows_beyond_theta_bar_have_no_root() {
    let atom = json!({"family": "point_mass_mix", "params": {"p0": 0.5, "rest": exp(1.0)}});
    let cfg = json!({"model": model(exp(0.3), vec![atom]), "rates": {"theta": {"start": -1.0, "stop": 1.0, "step": 0.05}, "v": [2.0, "limit"]}});
    let (dir, o) = run(&cfg, &["rates"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(&dir, "rates_zeta_0.csv");
    assert_eq!(rows.len(), 1 + 2 * 41);
    let theta_bar = 2f64.ln();
    for r in &rows[1..] {
        let theta: f64 = r[0].parse().unwrap();
        if -theta >= theta_bar {
            assert_eq!(r[5], "no_root");
            assert_eq!(r[1], "");
        } else {
            assert_eq!(r[5], "ok", "{r:?}");
        }
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let cfg = json!({"model": mm2(), "seed": 17, "simulate": {"horizon": 200000, "replications": 4, "probes": [{"v": 1.0, "theta": 0.1}]}});
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), &cfg);
    let mut manifests = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let o = qa(&["--config", &path, "--out", out.to_str().unwrap(), "--threads", threads, "simulate"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        for e in m["outputs"].as_array().unwrap() {
            let bytes = fs::read(out.join(e["file"].as_str().unwrap())).unwrap();
            assert_eq!(qa_cli::output::sha256_hex(&bytes), e["sha256"].as_str().unwrap());
        }
        manifests.push((m["config_hash"].clone(), m["outputs"].clone()));
    }
    assert_eq!(manifests[0], manifests[1]);
    assert_eq!(manifests[0], manifests[2]);
    let a = fs::read(dir.path().join("out0/pmf.csv")).unwrap();
    let b = fs::read(dir.path().join("out1/pmf.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = json!({"model": mm2(), "seed": 1, "simulate": {"horizon": 50000}});
    let (d1, _) = run(&cfg, &["simulate"]);
    let (d2, _) = run(&cfg, &["--seed", "2", "simulate"]);
    let (d3, _) = run(&cfg, &["--seed", "1", "simulate"]);
    assert_ne!(csv(&d1, "pmf.csv"), csv(&d2, "pmf.csv"));
    assert_eq!(csv(&d1, "pmf.csv"), csv(&d3, "pmf.csv"));
}

#[test]
fn alpha_for_mm2() {
    let cfg = json!({"model": mm2()});
    let (dir, o) = run(&cfg, &["alpha"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    // Larger root of 0.7 z² − 1.7 z + 1 = 0.
    let z: f64 = (1.7 + (1.7f64 * 1.7 - 2.8).sqrt()) / 1.4;
    assert!(s.contains(&format!("alpha={:.6}", z.ln())), "{s}");
    assert!(s.contains("alpha=0.356675"), "{s}");
    assert!(s.contains("regime=ExactAsymptotic"), "{s}");
    let rows = csv(&dir, "alpha_summary.csv");
    let alpha: f64 = rows[1][0].parse().unwrap();
    assert!((alpha - z.ln()).abs() < 1e-9);
}

#[test]
fn heavy_only_model_has_zero_decay() {
    let pareto = json!({"family": "pareto_exp", "params": {"r": 1.5, "delta": 0.0}});
    let cfg = json!({"model": model(exp(0.5), vec![pareto.clone(), pareto])});
    let (_dir, o) = run(&cfg, &["alpha"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("alpha=0.000000") && s.contains("regime=Zero"), "{s}");
}

#[test]
fn unstable_model_exits_with_two() {
    let cfg = json!({"model": model(exp(1.2), vec![exp(0.5), exp(0.5)])});
    let (_dir, o) = run(&cfg, &["alpha"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unstable"));
}

#[test]
fn config_errors_exit_with_three() {
    let cfg = json!({"model": mm2(), "simulat": {"horizon": 10}});
    let (_dir, o) = run(&cfg, &["simulate"]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("unknown field") && e.contains("line"), "{e}");

    let (_dir, o) = run(&json!({"model": mm2()}), &["simulate"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(qa(&["alpha"]).status.code(), Some(3));
    assert_eq!(qa(&["--bogus"]).status.code(), Some(3));
}

#[test]
fn invalid_law_exits_with_two() {
    let cfg = json!({"model": model(exp(-1.0), vec![exp(1.0)])});
    let (_dir, o) = run(&cfg, &["alpha"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn heavy_traffic_study_decreases() {
    let cfg = json!({"model": model(exp(1.0), vec![exp(1.0)]), "ht_study": {"n": {"from": 1, "to": 6}, "events": 10000}});
    let (dir, o) = run(&cfg, &["ht-study"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(&dir, "ht_study.csv");
    assert_eq!(rows[0], ["n", "r_n", "s_n", "rate", "ks_distance", "taylor_sup"]);
    let ks: Vec<f64> = rows[1..].iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(ks.windows(2).all(|w| w[1] < w[0]), "{ks:?}");
    assert!(ks[5] < 0.05, "{ks:?}");
    assert!(rows[1..].iter().all(|r| r[3] == rows[1][3]));
}

#[test]
fn large_variance_rate_with_arrival_variance_only() {
    let (lambda, b2) = (0.8, 3.0);
    let cfg = json!({
        "model": model(exp(lambda), vec![exp(lambda)]),
        "lv_study": {"n": [1, 2], "events": 20000, "b2": [b2, 0.0], "r_exponent": 1.0}
    });
    let (dir, o) = run(&cfg, &["lv-study"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(&dir, "lv_study.csv");
    let rate: f64 = rows[1][3].parse().unwrap();
    let expect = 2.0 * lambda / (lambda.powi(3) * b2);
    assert!((rate - expect).abs() < 1e-12 * expect, "{rate} vs {expect}");
}

#[test]
fn validate_default_probes_pass() {
    let cfg = json!({"model": mm2(), "seed": 5});
    let (dir, o) = run(&cfg, &["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(&dir, "validate.csv");
    assert_eq!(rows[0], ["kind", "v", "theta", "residual", "se", "z", "pass"]);
    assert_eq!(rows.len(), 1 + 2 * 9);
    for r in &rows[1..] {
        assert_eq!(r[6], "PASS", "{r:?}");
        if r[2].parse::<f64>().unwrap() == 0.0 {
            assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
        }
    }
    assert_eq!(csv(&dir, "jumps.csv").len(), 1 + 9);
}

#[test]
fn tail_with_flag_overrides() {
    let cfg = json!({"model": model(exp(1.0), vec![exp(1.0), exp(1.0)]), "tail": {"levels": [6], "budget": 100000}});
    let (dir, o) = run(&cfg, &["tail", "--level", "8", "--budget", "200000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv(&dir, "tail.csv");
    assert_eq!(rows[0], ["level", "estimate", "re", "method", "se"]);
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[1][0].as_str(), rows[1][3].as_str()), ("8", "is"));
    assert_eq!(rows[2][3], "naive");
    let est: f64 = rows[1][1].parse().unwrap();
    let se: f64 = rows[1][4].parse().unwrap();
    assert!((est - 0.5f64.powi(6)).abs() <= 4.0 * se, "{est} ± {se}");

    let (_dir, o) = run(&cfg, &["tail", "--level", "2"]);
    assert_eq!(o.status.code(), Some(3));
    let (_dir, o) = run(&cfg, &["tail", "--theta", "-0.5"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn manifest_is_written_last_and_lists_outputs() {
    let cfg = json!({"model": mm2(), "simulate": {"horizon": 20000}});
    let (dir, o) = run(&cfg, &["simulate"]);
    assert!(o.status.success());
    let out = dir.path().join("out");
    let manifest = out.join("manifest.json");
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["replications"], 1);
    let mtime = fs::metadata(&manifest).unwrap().modified().unwrap();
    for e in m["outputs"].as_array().unwrap() {
        let f = out.join(e["file"].as_str().unwrap());
        assert!(fs::metadata(f).unwrap().modified().unwrap() <= mtime);
    }
}

#[test]
fn help_documents_columns() {
    let o = qa(&["tail", "--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("level,estimate,re,method,se"));
}
