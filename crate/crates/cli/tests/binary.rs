use std::path::Path;
use std::process::{Command, Output};

fn qbsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbsde")).args(args).output().expect("spawn qbsde")
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const CANONICAL: &str = r#"schema_version = 1
id = "canonical"

[constants]
C = 1.0
gamma = 1.0
n = 1
d = 1
T = 1.0

[generator]
f = ["0.5*|z|^2"]

[terminal]
xi = ["cos(w)"]
"#;

#[test]
fn decoupled_solve_converges_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = qbsde(&[
        "solve-local",
        "--instance",
        "decoupled-quadratic",
        "--paths",
        "4000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o.stdout);
    assert!(s["iterations"].as_u64().unwrap() <= 2);
    for f in ["summary.json", "trace.csv", "solution.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,y_dist_sup,z_dist_bmo,ratio,in_ball\n"));
    let manifest = json(&std::fs::read(out.join("manifest.json")).unwrap());
    assert_eq!(manifest["grid"]["seed"], 1);
    assert_eq!(manifest["config"]["paths"], 4000);
    let solution = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(solution.lines().count(), 1 + 51);
    assert!(solution.starts_with("node,time,y1_mean,y1_q05,y1_q50,y1_q95,z1_rms,y2_mean"));
}

#[test]
fn instance_file_runs_and_matches_constants() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "canonical.toml", CANONICAL);
    let o = qbsde(&["constants", "--instance", &path]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(&o.stdout);
    assert!((s["ledger"]["local"]["mu"].as_f64().unwrap() - 5.0).abs() < 1e-12);
    assert!((s["ledger"]["local"]["delta"].as_f64().unwrap() - 0.125).abs() < 1e-15);

    let o = qbsde(&["solve-local", "--instance", &path, "--steps", "20", "--paths", "4000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o.stdout)["instance"], "canonical");
}

#[test]
fn parse_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("err");
    let path = write(dir.path(), "bad.toml", &CANONICAL.replace("cos(w)", "cos(w"));
    let o = qbsde(&["solve-local", "--instance", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = json(&std::fs::read(out.join("error.json")).unwrap());
    assert_eq!(e["error"]["code"], "parse_error");
    let msg = e["error"]["message"].as_str().unwrap();
    assert!(msg.contains("bad.toml:15:"), "{msg}");
}

#[test]
fn growth_violation_is_rejected_with_probe() {
    let dir = tempfile::tempdir().unwrap();
    let text = CANONICAL.replace("gamma = 1.0", "gamma = 0.1").replace("0.5*|z|^2", "|z|^2");
    let path = write(dir.path(), "steep.toml", &text);
    let o = qbsde(&["solve-local", "--instance", &path]);
    assert_eq!(o.status.code(), Some(1));
    let e = json(&o.stderr);
    assert_eq!(e["error"]["code"], "growth_bound");
    assert!(e["error"]["message"].as_str().unwrap().contains("z=["));
}

#[test]
fn non_convergence_reports_distances() {
    let o = qbsde(&["solve-local", "--instance", "coupled-quadratic", "--max-iter", "2", "--paths", "2000"]);
    assert_eq!(o.status.code(), Some(1));
    let e = json(&o.stderr);
    assert_eq!(e["error"]["code"], "not_converged");
    assert_eq!(e["error"]["distances"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors() {
    assert_eq!(qbsde(&["solve-local", "--instance", "missing"]).status.code(), Some(2));
    assert_eq!(qbsde(&["solve-local", "--instance", "bmo-battery"]).status.code(), Some(2));
    assert_eq!(qbsde(&["verify-lemmas", "--instance", "coupled-linear"]).status.code(), Some(2));
    assert_eq!(qbsde(&["solve-local", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(qbsde(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn list_instances_names_every_builtin() {
    let o = qbsde(&["list-instances"]);
    let s = json(&o.stdout);
    let ids: Vec<&str> = s["instances"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap()).collect();
    for id in [
        "decoupled-quadratic",
        "coupled-linear",
        "coupled-quadratic",
        "scalar-battery",
        "bmo-battery",
        "girsanov-battery",
    ] {
        assert!(ids.contains(&id), "{id}");
    }
}

#[test]
fn certified_mode_uses_the_certified_interval() {
    let o = qbsde(&["solve-local", "--instance", "coupled-quadratic", "--mode", "certified", "--paths", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o.stdout);
    let iv = s["interval"].as_array().unwrap();
    let length = iv[1].as_f64().unwrap() - iv[0].as_f64().unwrap();
    // t_end - t0 recomputed here carries one rounding of t0
    assert!(length <= s["certified"]["epsilon"].as_f64().unwrap() * (1.0 + 1e-9));
    assert!(s["trace"].as_array().unwrap().iter().all(|r| r["in_ball"] == true));
}

#[test]
fn run_config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "run.toml",
        "instance = \"coupled-quadratic\"\nsteps = 10\npaths = 3000\nseed = 4\n\n[basis]\nkind = \"bins\"\nsize = 8\n",
    );
    let out = dir.path().join("run");
    let o = qbsde(&["solve-local", "--config", &path, "--seed", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&std::fs::read(out.join("manifest.json")).unwrap());
    assert_eq!(m["config"]["steps"], 10);
    assert_eq!(m["config"]["seed"], 5);
    assert_eq!(m["config"]["basis"]["kind"], "bins");
}
