use std::fs;
use std::path::Path;
use std::process::Command;

use landau_nls::basis::BasisSpec;
use landau_nls::experiments::{ExperimentConfig, GridSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_landau-nls"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::preset("standard").unwrap();
    cfg.basis = BasisSpec::new(1, 1, 16, BasisSpec::min_half_width(1, 1));
    cfg.grid = GridSpec { z_points: 8, z_half_width: 6.0 };
    cfg.t_final = 0.02;
    cfg.sample_intervals = 2;
    cfg.initial = landau_nls::field::InitialData::SingleMode {
        n: 0,
        k: 1,
        profile: landau_nls::field::ZProfile::ground_state(),
    };
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn simulate_averaged_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["simulate-averaged", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("simulate_averaged_trajectory.csv")).unwrap();
    assert!(csv.starts_with("scenario,epsilon,t,mass,energy,sigma2prime,leakage,error\n"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("simulate_averaged.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["t_final"], 0.02);
}

#[test]
fn thread_count_does_not_change_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut bodies = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = bin()
            .args(["simulate-full", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        bodies.push(fs::read(out.join("simulate_full_trajectory.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"scenario\": 3 }").unwrap();
    let status = bin().args(["check-basis", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let status = bin()
        .args(["check-basis", "--scenario", "missing", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn failed_threshold_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("standard").unwrap();
    // too coarse for the eigen-residual threshold
    cfg.basis = BasisSpec::new(2, 2, 8, BasisSpec::min_half_width(2, 2));
    let path = dir.path().join("coarse.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let output = bin()
        .args(["check-basis", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stdout).contains("FAIL"));
}

#[test]
fn numerical_abort_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path());
    let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    cfg.params.lambda = 1e300;
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let status = bin()
        .args(["simulate-averaged", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
