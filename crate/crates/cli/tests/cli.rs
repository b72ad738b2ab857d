use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = "[scenario]\nname = \"static\"\n[lattice]\nn_sites = 8\nspacing = 1.0\n";

fn kgprop(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{cmd}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out_{cmd}"));
    let o = Command::new(env!("CARGO_BIN_EXE_kgprop"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (o, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn assemble_reports_unit_min_eigenvalue() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = kgprop(tmp.path(), "assemble", BASE, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("eigen_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(2).unwrap().split(',').collect();
    let min_eig: f64 = row[1].parse().unwrap();
    assert!((min_eig - 1.0).abs() < 1e-12);
    assert_eq!(row[4], "true");
    for name in ["L", "W", "B", "H", "S_dual"] {
        assert!(out.join(format!("{name}_t0.csv")).exists(), "{name}");
    }
}

#[test]
fn missing_key_is_a_config_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[scenario]\nname = \"static\"\n[lattice]\nspacing = 1.0\n";
    let (o, _) = kgprop(tmp.path(), "assemble", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("n_sites") && e.contains("line"), "{e}");
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, _) = kgprop(tmp.path(), "evolve", &format!("{BASE}[evolution]\nstep = 4\n"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step"));
}

#[test]
fn spacelike_shift_is_an_assumption_violation_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = kgprop(tmp.path(), "assemble", &format!("{BASE}[params]\nbeta = 1.2\n"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("assumptions.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["instantaneous_ok"], Value::Bool(false));
    assert!(report["config_hash"].is_string());
}

#[test]
fn tau_outside_window_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}[propagators]\nlabels = [\"pos\"]\ntau = [3.0]\n");
    let (o, _) = kgprop(tmp.path(), "propagate", &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside"));
}

#[test]
fn richardson_flag_adds_error_estimate_to_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}[evolution]\nsteps = 32\n");
    let (o, out) = kgprop(tmp.path(), "evolve", &cfg, &["--richardson", "on", "--sampling", "left"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert!(m["details"]["richardson_error"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["details"]["sampling"], "left");
    let (_, out2) = kgprop(tmp.path(), "evolve", &cfg, &[]);
    assert!(manifest(&out2)["details"].get("richardson_error").is_none());
}

#[test]
fn every_output_file_carries_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{BASE}[evolution]\nsteps = 32\n[propagators]\nlabels = [\"ret\", \"pos\"]\ntau = [0.5]\nt_grid = [0.0, 1.0]\n\
         [verify]\nfamilies = [\"charge\", \"projections\"]\n"
    );
    for cmd in ["assemble", "evolve", "propagate", "spectrum", "verify"] {
        let (o, out) = kgprop(tmp.path(), cmd, &cfg, &[]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        let hash = manifest(&out)["config_hash"].as_str().unwrap().to_string();
        assert_eq!(hash.len(), 64);
        for entry in std::fs::read_dir(&out).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.contains(&hash), "{} lacks the hash", path.display());
        }
    }
}

#[test]
fn seed_flag_changes_hash_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}[verify]\nfamilies = [\"charge\"]\n[evolution]\nsteps = 64\n");
    let (_, a) = kgprop(tmp.path(), "verify", &cfg, &[]);
    let ha = manifest(&a)["config_hash"].clone();
    std::fs::rename(&a, tmp.path().join("first")).unwrap();
    let (o, b) = kgprop(tmp.path(), "verify", &cfg, &["--seed", "99"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&b);
    assert_ne!(m["config_hash"], ha);
    assert_eq!(m["seed"], 99);
    let line = std::fs::read_to_string(b.join("reports.jsonl")).unwrap();
    let first: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(first["metadata"]["seed"], 99);
}

#[test]
fn failing_suite_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{BASE}[verify]\nfamilies = [\"residuals\"]\nn_intervals = 8\n");
    let (o, out) = kgprop(tmp.path(), "verify", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(manifest(&out)["details"]["checks_passed"], Value::Bool(false));
}
