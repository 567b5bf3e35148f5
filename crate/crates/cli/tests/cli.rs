use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn powerflow(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_powerflow"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, p: f64, tau: f64, t_max: f64, u0: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!(
            "family = \"robertson-walker\"\na = \"crossing\"\np = {p}\ntau = {tau}\nt_max = {t_max}\n\
             integrator = \"rk2\"\n\n[grid]\nn = 1\nsizes = [64]\n\n[u0]\n{u0}\n\n[output]\nstride = 50\n"
        ),
    )
    .unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_reaches_stationarity_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5, 0.5, 60.0, "kind = \"const\"\nvalue = 1.0");
    let out = dir.path().join("nested/out");
    let o = powerflow(&["run", "--quiet", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["termination"], "Stationary");
    assert!(manifest["bounds"]["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    let monitors = std::fs::read_to_string(out.join("monitors.ndjson")).unwrap();
    let last: Value = serde_json::from_str(monitors.lines().last().unwrap()).unwrap();
    assert_eq!(last["step"], manifest["steps"]);
    let snap = out.join(format!("snapshots/u_{}.csv", manifest["steps"]));
    assert!(std::fs::read_to_string(snap).unwrap().starts_with("x1,u\n"));
}

#[test]
fn out_of_range_exponent_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1.5, 0.5, 1.0, "kind = \"const\"\nvalue = 1.0");
    let o = powerflow(&["run", "--config"], &[&cfg, Path::new("--out"), &dir.path().join("o")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("p:"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5, 0.5, 1.0, "kind = \"const\"\nvalue = 1.0\nbogus = 3");
    let o = powerflow(&["run", "--config"], &[&cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn inadmissible_initial_data_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    // slice curvature 0.1 is below tau
    let cfg = write_config(dir.path(), 1.0, 0.5, 1.0, "kind = \"const\"\nvalue = 0.1");
    let o = powerflow(&["run", "--config"], &[&cfg, Path::new("--out"), &dir.path().join("o")]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn verify_all_identities_on_one_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = powerflow(&["verify", "--quiet", "--fixture", "minkowski", "--levels", "4", "--out"], &[&out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let slopes = read_json(&out.join("slopes.json"));
    assert_eq!(slopes.as_array().unwrap().len(), 7);
    let csv = std::fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert!(csv.starts_with("identity,fixture,series,dt,h,max_residual\n"));
}

#[test]
fn verify_single_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = powerflow(&["verify", "--quiet", "--identity", "tilt", "--out"], &[&out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let slopes = read_json(&out.join("slopes.json"));
    assert_eq!(slopes.as_array().unwrap().len(), 2);
    assert!(slopes.as_array().unwrap().iter().all(|s| s["identity"] == "tilt"));
}

#[test]
fn verify_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = powerflow(&["verify", "--levels", "1", "--out"], &[&out]);
    assert_eq!(code(&o), 2);
    let o = powerflow(&["verify", "--identity", "ricci_flow", "--out"], &[&out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("ricci_flow"));
}

#[test]
fn sweep_accepts_descending_and_rejects_others() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1.0, 0.0, 60.0, "kind = \"const\"\nvalue = 1.0");
    let out = dir.path().join("s");
    let o = powerflow(&["sweep-tau", "--quiet", "--taus", "0.4,0.2,0.1", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sweep = read_json(&out.join("sweep.json"));
    assert_eq!(sweep["report"]["distances"].as_array().unwrap().len(), 2);

    let o = powerflow(&["sweep-tau", "--taus", "0.1,0.2", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert_eq!(code(&o), 2);
    let o = powerflow(&["sweep-tau", "--taus", "--config"], &[&cfg, Path::new("--out"), &out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seeded_random_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        0.5,
        0.5,
        0.5,
        "kind = \"random\"\namplitude = 0.02\noffset = 1.0",
    );
    let mut files = Vec::new();
    for (name, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let out = dir.path().join(name);
        let o = powerflow(&["run", "--quiet", "--seed", seed, "--config"], &[&cfg, Path::new("--out"), &out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        files.push(std::fs::read(out.join("monitors.ndjson")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}
