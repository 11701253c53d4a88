use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn fklab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fklab"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_in(command: &str, out: &Path, settings: &[&str]) -> Output {
    let mut args = vec![
        command.to_string(),
        "--out".into(),
        out.display().to_string(),
        "--seed".into(),
        "42".into(),
    ];
    for s in settings {
        args.push("--set".into());
        args.push(s.to_string());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    fklab(&refs)
}

pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

/// Small configurations for every command.
pub const COMMANDS: &[(&str, &[&str])] = &[
    (
        "sample",
        &["n=2", "p=0.5", "q=2", "samples=5", "burn_in=5", "chains=2"],
    ),
    ("enumerate", &["sides=2,2", "p=0.4", "q=1.5", "bc=wired"]),
    (
        "xi",
        &[
            "p=0.3",
            "q=1",
            "scales=2..8:2",
            "per_stage=100",
            "replicates=4",
        ],
    ),
    (
        "oz",
        &[
            "p=0.3",
            "q=1",
            "scales=2..12:2",
            "per_stage=100",
            "replicates=4",
        ],
    ),
    (
        "wulff",
        &[
            "p=0.3",
            "q=1",
            "directions=1,0;2,1;1,1;1,2;0,1",
            "min_distance=3",
            "max_distance=12",
            "per_stage=200",
            "replicates=4",
            "harmonics=1",
        ],
    ),
    ("skeleton", &["p=0.45", "target=6,0"]),
    ("decompose", &["p=0.45", "target=6,0"]),
    ("interface", &["n=4", "profiles=20", "burn_in=10"]),
    (
        "bridge",
        &[
            "n=4",
            "profiles=1000",
            "burn_in=10",
            "thinning=1",
            "batches=20",
        ],
    ),
    ("exit", &["dim=1", "p=0.5", "sizes=1..4"]),
    ("duality", &["p=0.5", "q=2"]),
];

/// Runs `command` twice into the same directory and names the first file whose bytes
/// differ, or reports a failed run.
pub fn rerun_differences(command: &str, dir: &Path, settings: &[&str]) -> Result<(), String> {
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| e.to_string())?;
        }
        let out = run_in(command, dir, settings);
        if !out.status.success() {
            return Err(format!(
                "{command} failed: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        snapshots.push(snapshot(dir));
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    if !a.contains_key("manifest.json") {
        return Err(format!("{command} wrote no manifest"));
    }
    if a.keys().ne(b.keys()) {
        return Err(format!("{command} wrote different file sets"));
    }
    match a.iter().find(|(name, bytes)| b[*name] != **bytes) {
        Some((name, _)) => Err(format!("{command}: {name} differs between runs")),
        None => Ok(()),
    }
}
