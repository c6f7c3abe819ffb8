use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wickchaos"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn wickchaos")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

/// Column `name` of a CSV table, skipping `#` metadata lines.
fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    lines.map(|l| l.split(',').nth(j).unwrap().parse().unwrap()).collect()
}

#[test]
fn unknown_demo_is_a_usage_error() {
    let o = run(&["demo", "no-such-demo"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("possible values"));
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn solve_without_config_is_a_usage_error() {
    assert_eq!(code(&run(&["solve", "bsde"])), 2);
}

#[test]
fn config_without_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", r#"{"lq": {"x0": 1.0}}"#);
    let o = run(&["solve", "lq", "--config", &p]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", r#"{"grid": {"T": 1, "M": 8}, "lq": {"x0": 1.0, "sigm": 0.3}}"#);
    assert_eq!(code(&run(&["solve", "lq", "--config", &p])), 2);
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", r#"{"grid": {"T": 1, "M": 8}}"#);
    assert_eq!(code(&run(&["solve", "cashflow", "--config", &p])), 2);
}

#[test]
fn lq_writes_policy_and_objective() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config_dir().join("lq.json");
    let o = run(&[
        "solve",
        "lq",
        "--config",
        cfg.to_str().unwrap(),
        "--paths",
        "4000",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let policy = std::fs::read_to_string(out.path().join("policy.csv")).unwrap();
    let u = column(&policy, "u_mean");
    assert_eq!(u.len(), 17);
    assert!(u.iter().all(|v| *v >= 0.0));
    // X starts at −2, so the optimal push is upwards
    assert!(u[0] > 0.5, "u(0) = {}", u[0]);
    let summary = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.starts_with("J,")), "{summary}");
    assert!(std::fs::read_to_string(out.path().join("iterations.csv")).unwrap().contains("sup_change"));
}

#[test]
fn unconverged_picard_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "c.json",
        r#"{"grid": {"T": 1, "M": 8}, "lq": {"x0": -2.0, "sigma": 0.3, "max_iter": 1, "tol": 1e-12}}"#,
    );
    let o = run(&["solve", "lq", "--config", &p, "--paths", "2000"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn meanfield_without_second_kind_terms_matches_bsde() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "grid": {"T": 1, "M": 16},
        "levy": [{"zeta": 0.4, "nu": 1.5}],
        "bsde": {"alpha1": 0.3, "beta1": [0.1, 0.2], "eta1": [0.25], "gamma": 0.5,
                 "xi": {"c0": 1.0, "cB": 0.5, "cN": 0.2}}
    }"#;
    let p = write_config(dir.path(), "c.json", body);
    let a = run(&["solve", "bsde", "--config", &p, "--paths", "3000", "--seed", "5"]);
    let b = run(&["solve", "meanfield", "--config", &p, "--paths", "3000", "--seed", "5"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0, "{}", String::from_utf8_lossy(&b.stderr));
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    let b_solution = b.split("\n\n").next().unwrap();
    for col in ["y_mean", "z", "k_1"] {
        let (x, y) = (column(&a, col), column(b_solution, col));
        assert_eq!(x.len(), y.len());
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() <= 1e-8, "{col}: {u} vs {v}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = config_dir().join("bsde.json");
    let cfg = cfg.to_str().unwrap();
    for format in ["csv", "json"] {
        let a = run(&["solve", "bsde", "--config", cfg, "--paths", "3000", "--format", format]);
        let b = run(&["solve", "bsde", "--config", cfg, "--paths", "3000", "--format", format]);
        assert_eq!(code(&a), 0);
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{format}");
    }
}

#[test]
fn metadata_records_the_run() {
    let cfg = config_dir().join("bsde.json");
    let o = run(&["solve", "bsde", "--config", cfg.to_str().unwrap(), "--paths", "1000", "--seed", "7", "--k", "6"]);
    let s = String::from_utf8(o.stdout).unwrap();
    for key in [
        "# seed: 7",
        "# n_paths: 1000",
        "# truncation: K=6",
        "# grid: T=1 M=32",
        "# git_describe: ",
        "# command: solve bsde",
    ] {
        assert!(s.contains(key), "missing {key:?} in\n{s}");
    }
    let o = run(&[
        "solve",
        "bsde",
        "--config",
        cfg.to_str().unwrap(),
        "--paths",
        "1000",
        "--seed",
        "7",
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["seed"], "7");
    assert_eq!(v["columns"][0], "t");
    assert_eq!(v["rows"].as_array().unwrap().len(), 33);
}

#[test]
fn demos_pass() {
    for name in ["moments", "wick-square", "skorohod-cube", "clark-ocone", "resolvent-exp"] {
        let o = run(&["demo", name, "--paths", "2000"]);
        let out = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "{name}:\n{out}");
        assert!(out.contains("identity,t,lhs,rhs"));
        assert!(!out.contains(",false"), "{out}");
    }
}

#[test]
fn selftest_reports_a_corrupted_criterion() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["selftest", "--quick", "--only", "1", "--corrupt", "--out", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL  1 wick-laws"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wick-laws"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("acceptance.json")).unwrap()).unwrap();
    assert_eq!(doc["criteria"][0]["pass"], false);
}

#[test]
fn selftest_single_criterion_passes() {
    let o = run(&["selftest", "--quick", "--only", "1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn selftest_rejects_unknown_ids() {
    assert_eq!(code(&run(&["selftest", "--only", "18"])), 2);
    assert_eq!(code(&run(&["selftest", "--quick", "--full"])), 2);
}
