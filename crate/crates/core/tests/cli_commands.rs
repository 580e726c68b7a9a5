//! The `mfh` binary: outputs, manifests, replay and exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn out_dir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mfh_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn mfh(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mfh")).arg("--out").arg(out).args(args).output().unwrap()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn volterra_check_writes_outputs_and_replays_from_manifest() {
    let out = out_dir("volterra");
    let o = mfh(&out, &["volterra-check", "--dt", "0.01", "--t-end", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["command"], "volterra-check");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(out.join("volterra.csv")).unwrap();
    assert!(csv.starts_with("t,r\n"));
    let first = std::fs::read_to_string(out.join("volterra.json")).unwrap();

    let replay = out_dir("volterra_replay");
    let o = Command::new(env!("CARGO_BIN_EXE_mfh"))
        .arg("--out")
        .arg(&replay)
        .arg("--config")
        .arg(out.join("manifest.json"))
        .arg("volterra-check")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(manifest(&replay)["config_sha256"], m["config_sha256"]);
    assert_eq!(std::fs::read_to_string(replay.join("volterra.json")).unwrap(), first);
}

#[test]
fn flags_override_config_file() {
    let out = out_dir("override");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("cfg.json");
    std::fs::write(&cfg, r#"{"model":{"kind":"toy","beta":0.1,"m":1.5},"alpha":2.0}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mfh"))
        .arg("--out")
        .arg(&out)
        .arg("--config")
        .arg(&cfg)
        .args(["invariant", "--m", "3"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["alpha"].as_f64(), Some(2.0));
    assert_eq!(m["config"]["model"]["m"].as_f64(), Some(3.0));
}

#[test]
fn simulate_flow_only_and_seventeen_digits() {
    let out = out_dir("simulate");
    let o = mfh(&out, &["simulate", "--model", "toy", "--rate", "zero", "--N", "1", "--t-end", "1", "--init", "point:0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rate = std::fs::read_to_string(out.join("rate.csv")).unwrap();
    let mut lines = rate.lines();
    assert_eq!(lines.next(), Some("t,rate"));
    let row = lines.nth(1).unwrap();
    let t = row.split(',').next().unwrap();
    assert_eq!(t.split('e').next().unwrap().replace(['.', '-'], "").len(), 17, "{t}");
    assert!(out.join("raster.csv").exists());
}

#[test]
fn hopf_curve_and_bifurcation_point() {
    let out = out_dir("hopf");
    assert!(mfh(&out, &["hopf-curve"]).status.success());
    for f in ["hopf_curve.csv", "hopf_locus.csv", "multiple_points.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(mfh(&out, &["bifurcation-point", "--epsilon0", "0.05"]).status.success());
    let p: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("bifurcation_point.json")).unwrap()).unwrap();
    assert!(p["checks"]["isolated_marginal_pair"].as_bool().unwrap());
}

#[test]
fn stability_over_a_coupling() {
    let out = out_dir("stability");
    let o = mfh(&out, &["stability", "--J", "0.6108256237659907"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("stability.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn exit_codes() {
    let out = out_dir("codes");
    assert_eq!(mfh(&out, &["simulate", "--model", "bogus"]).status.code(), Some(1));
    assert_eq!(mfh(&out, &["volterra-check", "--dt", "-1"]).status.code(), Some(1));
    assert_eq!(mfh(&out, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(mfh(&out, &["invariant", "--model", "toy", "--m", "0.5", "--alpha", "0.1"]).status.code(), Some(1));
    // numeric failure: the constructed point is not transversal
    assert_eq!(mfh(&out, &["bifurcation-point", "--epsilon0", "0.9"]).status.code(), Some(2));
}
