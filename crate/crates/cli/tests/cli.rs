use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pseudolind"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pseudolind")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL: &str = r#"{
  "system": { "hubbard": { "sites": 3, "particles": 1, "interaction": 1.0, "boundary": "open",
                           "gamma": 0.1, "initial_occupation": [0] } },
  "bath": { "cutoff": 1.0, "beta": 5.0 },
  "run": { "t_max": 2.0, "dt": 0.01, "output_dt": 0.5, "n_trajectories": 60, "n_ladder": [20, 60] }
}"#;

const HPZ: &str = r#"{
  "system": { "hpz": { "mass": 1.0, "omega": 1.0, "dim": 8,
                       "coefficients": { "constant": { "gamma_q": 0.0, "gamma_p": 0.1, "d_q": 0.0, "d_p": 0.2 } } } },
  "run": { "t_max": 1.0, "dt": 0.005, "output_dt": 0.5, "n_trajectories": 20 }
}"#;

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("\"cutoff\"", "\"cutof\"");
    let cfg = write_config(dir.path(), "bad.json", &bad);
    let o = run(&["evolve", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cutof"));

    let nested = SMALL.replace("\"dt\": 0.01", "\"dt\": 0.01, \"extra\": 1");
    let cfg = write_config(dir.path(), "nested.json", &nested);
    assert!(!run(&["evolve", "--config", s(&cfg)]).status.success());
}

#[test]
fn invalid_values_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &SMALL.replace("\"output_dt\": 0.5", "\"output_dt\": 0.015"));
    let o = run(&["evolve", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.output_dt"));
}

#[test]
fn zero_coupling_keeps_populations_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &SMALL.replace("\"gamma\": 0.1", "\"gamma\": 0.0"));
    let out = dir.path().join("o");
    ok(&["evolve", "--config", s(&cfg), "--out", s(&out)]);
    let rows = csv_rows(&out.join("evolve.csv"));
    assert_eq!(rows[0], ["t", "p_0", "tr_rho", "purity"]);
    let p0: f64 = rows[1][1].parse().unwrap();
    for r in &rows[1..] {
        let p: f64 = r[1].parse().unwrap();
        assert!((p - p0).abs() < 1e-12, "{p} vs {p0}");
    }
}

#[test]
fn plqt_is_deterministic_across_threads_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        ok(&["plqt", "--config", s(&cfg), "--out", s(&out), "--seed", "7", "--threads", threads]);
        outputs.push(out);
    }
    let bytes = |o: &PathBuf, f: &str| fs::read(o.join(f)).unwrap();
    for f in ["plqt.csv", "convergence.csv"] {
        assert_eq!(bytes(&outputs[0], f), bytes(&outputs[1], f), "{f}");
        assert_eq!(bytes(&outputs[0], f), bytes(&outputs[2], f), "{f}");
    }

    // Rerunning from the resolved config reproduces the run.
    let again = dir.path().join("again");
    ok(&[
        "plqt",
        "--config",
        s(&outputs[0].join("resolved_config.json")),
        "--out",
        s(&again),
    ]);
    assert_eq!(bytes(&outputs[0], "plqt.csv"), bytes(&again, "plqt.csv"));
    let from_manifest = dir.path().join("from_manifest");
    ok(&[
        "plqt",
        "--config",
        s(&outputs[1].join("manifest.json")),
        "--out",
        s(&from_manifest),
    ]);
    assert_eq!(bytes(&outputs[0], "plqt.csv"), bytes(&from_manifest, "plqt.csv"));
    assert_eq!(bytes(&outputs[0], "convergence.csv"), bytes(&from_manifest, "convergence.csv"));

    let other = dir.path().join("other");
    ok(&["plqt", "--config", s(&cfg), "--out", s(&other), "--seed", "8"]);
    assert_ne!(bytes(&outputs[0], "plqt.csv"), bytes(&other, "plqt.csv"));
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("o");
    ok(&["plqt", "--config", s(&cfg), "--out", s(&out)]);
    let rows = csv_rows(&out.join("plqt.csv"));
    assert_eq!(
        rows[0],
        ["t", "p_0_mean", "p_0_stderr", "neg_sign_fraction", "N_eff", "anomalies"]
    );
    for r in &rows[1..] {
        for cell in &r[..5] {
            let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{cell}");
        }
        assert!(r[5] == "0" || r[5] == "1");
    }
}

#[test]
fn manifest_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("o");
    ok(&["rates", "--config", s(&cfg), "--out", s(&out), "--seed", "3"]);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "rates");
    assert_eq!(m["master_seed"], 3);
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["rates.csv", "pauli.csv", "resolved_config.json"] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
        assert!(out.join(f).exists());
    }
    assert!(m["summary"]["detailed_balance_residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn optimize_reports_every_channel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("o");
    ok(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("optimize.json")).unwrap()).unwrap();
    let channels = r["channels"].as_array().unwrap();
    assert_eq!(channels.len(), 3);
    for ch in channels {
        let wm = ch["weight_minus"].as_f64().unwrap();
        let um = ch["unoptimized_weights"][1].as_f64().unwrap();
        assert!(wm <= um + 1e-15);
        let diff = ch["weight_plus"].as_f64().unwrap() - wm;
        assert!((diff - ch["weight_difference"].as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn hpz_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", HPZ);
    let out = dir.path().join("o");
    ok(&["hpz-check", "--config", s(&cfg), "--out", s(&out)]);
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("hpz_check.json")).unwrap()).unwrap();
    assert!(r["dual_form_residual"].as_f64().unwrap() < 1e-12);
    assert!(r["pseudo_lindblad_residual"].as_f64().unwrap() < 1e-12);
    assert_eq!(r["phi_min_is_zero"], true);

    ok(&["evolve", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["plqt", "--config", s(&cfg), "--out", s(&out)]);
    assert!(out.join("plqt.csv").exists());

    let o = run(&["rates", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!o.status.success());
}

#[test]
fn mode_field_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &SMALL.replacen('{', "{ \"mode\": \"plqt\",", 1));
    assert!(!run(&["evolve", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]).status.success());
}
