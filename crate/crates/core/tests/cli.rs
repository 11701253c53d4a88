mod common;

use std::fs;
use std::path::Path;

use serde_json::Value;

use common::{fklab, rerun_differences, run_in, snapshot, COMMANDS};

#[test]
fn every_command_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    for (command, settings) in COMMANDS {
        if let Err(e) = rerun_differences(command, &tmp.path().join(command), settings) {
            panic!("{e}");
        }
    }
}

#[test]
fn manifest_lists_outputs_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e");
    assert!(run_in("enumerate", &dir, &["sides=1,2", "p=0.5", "q=2"])
        .status
        .success());
    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "enumerate");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["q"], "2");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert_eq!(files, ["distribution.csv", "marginals.csv", "report.json"]);
}

#[test]
fn single_bond_enumeration() {
    // free single bond at q = 2: weights p q and (1 - p) q^2
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e");
    assert!(run_in("enumerate", &dir, &["sides=1,2", "p=0.5", "q=2"])
        .status
        .success());
    let table = fs::read_to_string(dir.join("distribution.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let open: f64 = rows[1][2].parse().unwrap();
    assert!((open - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn duality_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    assert!(run_in("duality", &dir, &["p=0.5", "q=2"]).status.success());
    let report: Value =
        serde_json::from_slice(&fs::read(dir.join("duality.json")).unwrap()).unwrap();
    assert!((report["p_star"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!(report["total_variation"].as_f64().unwrap() < 1e-10);
    assert!(
        (report["self_dual_point"].as_f64().unwrap() - 2f64.sqrt() / (1.0 + 2f64.sqrt())).abs()
            < 1e-10
    );
}

#[test]
fn existing_output_is_a_collision() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    assert!(run_in("duality", &dir, &["p=0.5"]).status.success());
    let again = run_in("duality", &dir, &["p=0.5"]);
    assert_eq!(again.status.code(), Some(2));
    let err = String::from_utf8_lossy(&again.stderr);
    assert!(err.starts_with("error kind=collision key=out"), "{err}");
    let dir_str = dir.display().to_string();
    let forced = fklab(&["duality", "--out", &dir_str, "--set", "p=0.5", "--force"]);
    assert!(forced.status.success());
}

#[test]
fn configuration_errors_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: &[(&str, &[&str], &str)] = &[
        ("duality", &["p=1.5"], "p"),
        ("sample", &["p=0.5", "q=0.5"], "q"),
        (
            "sample",
            &["p=0.5", "q=1.5", "sampler=swendsen-wang"],
            "sampler",
        ),
        ("enumerate", &["sides=5,5", "p=0.5"], "sides"),
        ("interface", &["grid=7"], "grid"),
        ("xi", &["p=0.3", "scales=8,4"], "scales"),
        ("exit", &["p=0.5", "q=2"], "q"),
        ("sample", &["q=2"], "p"),
    ];
    for (i, (command, settings, key)) in cases.iter().enumerate() {
        let dir = tmp.path().join(format!("case{i}"));
        let out = run_in(command, &dir, settings);
        assert_eq!(out.status.code(), Some(2), "{command} {settings:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(
            err.starts_with(&format!("error kind=config key={key} ")),
            "{command} {settings:?}: {err}"
        );
        // validation happens before anything is written
        assert!(!dir.exists());
    }
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# single bond\nsides = 1,2\np = 0.9\nq = 2\n").unwrap();
    let dir = tmp.path().join("e");
    let (cfg_s, dir_s) = (cfg.display().to_string(), dir.display().to_string());
    let out = fklab(&[
        "enumerate",
        "--config",
        &cfg_s,
        "--out",
        &dir_s,
        "--set",
        "p=0.5",
    ]);
    assert!(out.status.success());
    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["p"], "0.5");
    fs::write(&cfg, "p = 0.5\np = 0.6\n").unwrap();
    let bad = fklab(&[
        "enumerate",
        "--config",
        &cfg_s,
        "--out",
        &tmp.path().join("f").display().to_string(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sample_writes_one_dump_per_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s");
    let out = run_in(
        "sample",
        &dir,
        &["n=2", "p=0.5", "q=2", "samples=5", "burn_in=5"],
    );
    assert!(out.status.success());
    let dir_s = tmp.path().join("s3").display().to_string();
    assert!(
        fklab(&["sample", "--out", &dir_s, "--chains", "3", "--set", "p=0.5", "--set", "n=1"])
            .status
            .success()
    );
    let files = snapshot(Path::new(&dir_s));
    for c in 0..3 {
        assert!(files.contains_key(&format!("chain_{c}.dump")));
    }
    assert!(files.contains_key("summary.csv"));
}
