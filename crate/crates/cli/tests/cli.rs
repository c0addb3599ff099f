//! End-to-end runs of the binary: outputs, exit codes and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_alphapred"));
    cmd.args(args).arg("--out").arg(dir);
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const AS1: &str = r#"{"design": {"as1": {"m": 3, "k": 3, "n_rep": 4}}}"#;

#[test]
fn canonicalize_as1_reports_exact_d() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["canonicalize"], Some(AS1));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let problem = json(&dir.path().join("problem.json"));
    let d: Vec<f64> = problem["D"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(d, vec![0.25; 3]);
    assert_eq!(problem["n"], 12);
    let report = json(&dir.path().join("invariants.json"));
    assert!(
        report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true),
        "{report}"
    );
}

#[test]
fn canonicalize_rejects_rank_deficient_x() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"design": {"explicit": {
        "X": [[1, 2, 3], [2, 4, 1], [3, 6, 0], [4, 8, 2], [5, 10, 7]],
        "Xtilde": [[1, 0, 0]]}}}"#;
    let out = run(dir.path(), &["canonicalize"], Some(config));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["no-such-command"], None)), 1);
    assert_eq!(code(&run(dir.path(), &["bounds", "--threads", "0"], Some(AS1))), 1);
    assert_eq!(code(&run(dir.path(), &["bounds"], Some(r#"{"unknown_field": 1}"#))), 1);
    assert_eq!(code(&run(dir.path(), &["canonicalize"], Some("{not json"))), 1);
    let missing = Command::new(env!("CARGO_BIN_EXE_alphapred"))
        .args(["canonicalize", "--config"])
        .arg(dir.path().join("absent.json"))
        .output()
        .unwrap();
    assert_eq!(code(&missing), 1);
}

#[test]
fn bounds_identity_example() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"bounds": {"d": [1, 1, 1], "c": [1, 1, 1], "m": 3, "n": 12, "k": 3}}"#;
    let out = run(dir.path(), &["bounds"], Some(config));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let b = json(&dir.path().join("bounds.json"));
    assert!((b["nu1"].as_f64().unwrap() - 16.0 / 75.0).abs() < 1e-15);
    assert!((b["nu2"].as_f64().unwrap() - 13.0 / 15.0).abs() < 1e-15);
    assert!((b["nu3"].as_f64().unwrap() - 4.0).abs() < 1e-15);
    assert_eq!(b["positive"], true);
    // a = (ν(n − k) − k − 2)/2
    let a = (16.0 / 75.0 * 9.0 - 5.0) / 2.0;
    assert!((b["suggested_a"].as_f64().unwrap() - a).abs() < 1e-12);
}

#[test]
fn identities_pass_at_defaults() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["identities"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("identities.json"));
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["identities"].as_array().unwrap().len(), 4);
}

#[test]
fn identities_fail_at_tight_tolerance() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"identities": {"tolerance": 1e-14, "chi_square_draws": 1000, "log_grid_points": 10}}"#;
    let out = run(dir.path(), &["identities"], Some(config));
    assert_eq!(code(&out), 3);
    assert_eq!(json(&dir.path().join("identities.json"))["all_pass"], false);
}

#[test]
fn identities_with_no_instances_pass() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"identities": {"lemma_instances": 0, "beta_instances": 0,
        "chi_square_draws": 0, "log_grid_points": 0}}"#;
    let out = run(dir.path(), &["identities"], Some(config));
    assert_eq!(code(&out), 0);
    let report = json(&dir.path().join("identities.json"));
    assert!(report["identities"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["instances"] == 0));
}

#[test]
fn empty_grid_gives_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"design": {"as1": {"m": 3, "k": 3, "n_rep": 4}}, "grid": {"theta_norms": []}}"#;
    let out = run(dir.path(), &["risk-compare"], Some(config));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("risk.csv")).unwrap();
    assert_eq!(
        csv,
        "procedure,alpha,theta_norm,sigma2,reps,risk_mean,risk_se,minimax_risk,dominates_flag\n"
    );
}

const SMALL: &str = r#"{"seed": 11, "design": {"as1": {"m": 3, "k": 3, "n_rep": 4}},
    "alphas": [1.0, 0.5], "grid": {"theta_norms": [0, 3], "sigma2": [1.0, 2.0]},
    "reps": 400, "reps_outer": 60, "n_mc_inner": 200, "n_is": 512}"#;

#[test]
fn risk_compare_is_byte_identical_across_runs_and_threads() {
    let dirs: Vec<TempDir> = (0..3).map(|_| TempDir::new().unwrap()).collect();
    let outputs: Vec<String> = dirs
        .iter()
        .zip([["--threads", "1"], ["--threads", "8"], ["--threads", "8"]])
        .map(|(dir, threads)| {
            let out = run(dir.path(), &["risk-compare", threads[0], threads[1]], Some(SMALL));
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
            fs::read_to_string(dir.path().join("risk.csv")).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
    // every row carries reps and a standard error
    for line in outputs[0].lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 9);
        assert!(fields[4].parse::<usize>().unwrap() > 0);
        assert!(fields[6].parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn seed_flag_overrides_config() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let config = r#"{"seed": 1, "design": {"as1": {"m": 3, "k": 3, "n_rep": 4}}, "reps": 200}"#;
    assert_eq!(code(&run(a.path(), &["risk-compare"], Some(config))), 0);
    assert_eq!(code(&run(b.path(), &["risk-compare", "--seed", "2"], Some(config))), 0);
    assert_ne!(
        fs::read_to_string(a.path().join("risk.csv")).unwrap(),
        fs::read_to_string(b.path().join("risk.csv")).unwrap()
    );
}

#[test]
fn degenerate_normalization_exits_with_four() {
    let dir = TempDir::new().unwrap();
    let density = r#"{"design": {"as1": {"m": 3, "k": 3, "n_rep": 4}}, "prior": {"a": 5000}, "n_is": 4000,
        "density": {"observation": {"V": [0, 0, 0], "S": 1}, "points": [[0, 0, 0]], "alpha": 0.5}}"#;
    let out = run(dir.path(), &["density-eval"], Some(density));
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let risk = r#"{"design": {"as1": {"m": 3, "k": 3, "n_rep": 4}}, "prior": {"a": 5000}, "alphas": [0.5],
        "procedures": ["shrinkage_bayes"], "reps_outer": 50, "n_mc_inner": 100, "n_is": 1000}"#;
    let out = run(dir.path(), &["risk-compare"], Some(risk));
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn density_eval_writes_normalized_values() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"design": {"as1": {"m": 3, "k": 3, "n_rep": 4}},
        "density": {"observation": {"V": [0.4, -0.2, 0.1], "S": 9.0},
                    "points": [[0, 0, 0], [1, -1, 0.5]], "alpha": 0.5, "procedure": "best_invariant"}}"#;
    let out = run(dir.path(), &["density-eval"], Some(config));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "ytilde_1,ytilde_2,ytilde_3,log_density_unnormalized,log_norm_const,log_density"
    );
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[3] - v[4] - v[5]).abs() < 1e-12);
    }
}
