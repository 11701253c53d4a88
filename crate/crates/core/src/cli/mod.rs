//! Command-line driver: configuration files, output directories and manifests.
//!
//! Every command reads a flat `key = value` configuration (from `--config` and `--set`
//! overrides), writes its outputs into a fresh directory together with `manifest.json`,
//! and draws all randomness from the single configured seed. Chain `c` of a run uses
//! stream `c` of that seed.

mod commands;

pub use commands::{raw_unit_ball, DEFAULT_DIRECTIONS};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

/// Random-cluster model laboratory.
#[derive(Debug, Parser)]
#[command(name = "fklab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (overrides the `out` key).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of independent chains for sampling commands.
    #[arg(long, global = true, value_name = "N")]
    pub chains: Option<usize>,
    /// Allow writing into an existing non-empty output directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Sets a configuration key, overriding the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample bond configurations and write dump files.
    Sample,
    /// Exact distribution of a small graph by enumeration.
    Enumerate,
    /// Directional connectivity series and inverse correlation length.
    Xi,
    /// Free-exponent Ornstein-Zernike fit.
    Oz,
    /// Equi-decay set, Wulff shape and curvature from directional fits.
    Wulff,
    /// Skeleton of a cluster.
    Skeleton,
    /// Cone-point decomposition and effective walk of a cluster.
    Decompose,
    /// Interface profiles of the Potts model with Dobrushin boundary colours.
    Interface,
    /// Brownian-bridge test on interface profiles.
    Bridge,
    /// Escape probabilities from boxes.
    Exit,
    /// Planar duality checks.
    Duality,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Enumerate => "enumerate",
            Command::Xi => "xi",
            Command::Oz => "oz",
            Command::Wulff => "wulff",
            Command::Skeleton => "skeleton",
            Command::Decompose => "decompose",
            Command::Interface => "interface",
            Command::Bridge => "bridge",
            Command::Exit => "exit",
            Command::Duality => "duality",
        }
    }
}

/// Failure of a command, printed as a single machine-readable line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: &'static str,
    pub key: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError {
            kind: "config",
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    pub fn run(message: impl fmt::Display) -> Self {
        CliError {
            kind: "run",
            key: None,
            message: message.to_string(),
        }
    }

    pub fn io(message: impl fmt::Display) -> Self {
        CliError {
            kind: "io",
            key: None,
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.kind == "config" || self.kind == "collision" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error kind={}", self.kind)?;
        if let Some(k) = &self.key {
            write!(f, " key={k}")?;
        }
        write!(
            f,
            " message={}",
            serde_json::to_string(&self.message).expect("string")
        )
    }
}

impl std::error::Error for CliError {}

/// Flat `key = value` configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::config(
                    &format!("line{}", i + 1),
                    format!("expected 'key = value', found '{line}'"),
                )
            })?;
            let k = k.trim();
            if k.is_empty() || values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::config(
                    k,
                    format!("empty or repeated key on line {}", i + 1),
                ));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    fn parse_value<T: FromStr>(&self, key: &str, v: &str) -> Result<T, CliError> {
        v.parse()
            .map_err(|_| CliError::config(key, format!("cannot parse '{v}'")))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self
            .raw(key)
            .ok_or_else(|| CliError::config(key, "missing required key"))?;
        self.parse_value(key, v)
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.raw(key) {
            Some(v) => self.parse_value(key, v),
            None => Ok(default),
        }
    }

    /// A float in `[lo, hi]`.
    pub fn ranged(
        &self,
        key: &str,
        default: Option<f64>,
        lo: f64,
        hi: f64,
    ) -> Result<f64, CliError> {
        let v = match default {
            Some(d) => self.get_or(key, d)?,
            None => self.required(key)?,
        };
        if !(lo..=hi).contains(&v) {
            return Err(CliError::config(key, format!("{v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    /// A positive integer.
    pub fn positive(&self, key: &str, default: usize) -> Result<usize, CliError> {
        let v: usize = self.get_or(key, default)?;
        if v == 0 {
            return Err(CliError::config(key, "must be positive"));
        }
        Ok(v)
    }

    /// Comma-separated integers; `a..b` and `a..b:step` expand to inclusive ranges.
    pub fn int_list(&self, key: &str, default: &str) -> Result<Vec<i64>, CliError> {
        let text = self.raw(key).unwrap_or(default);
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((a, rest)) = part.split_once("..") {
                let (b, step) = rest.split_once(':').unwrap_or((rest, "1"));
                let a: i64 = self.parse_value(key, a.trim())?;
                let b: i64 = self.parse_value(key, b.trim())?;
                let step: i64 = self.parse_value(key, step.trim())?;
                if step <= 0 {
                    return Err(CliError::config(key, "range step must be positive"));
                }
                out.extend((a..=b).step_by(step as usize));
            } else {
                out.push(self.parse_value(key, part)?);
            }
        }
        if out.is_empty() {
            return Err(CliError::config(key, "empty list"));
        }
        Ok(out)
    }

    /// Comma-separated floats.
    pub fn float_list(&self, key: &str, default: &str) -> Result<Vec<f64>, CliError> {
        let text = self.raw(key).unwrap_or(default);
        text.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| self.parse_value(key, p))
            .collect()
    }
}

/// A fresh output directory and the files written into it.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    /// Creates the directory; an existing non-empty directory is a collision unless `force`.
    pub fn create(dir: &Path, force: bool) -> Result<Self, CliError> {
        if dir.exists() {
            let occupied = fs::read_dir(dir).map_err(CliError::io)?.next().is_some();
            if occupied && !force {
                return Err(CliError {
                    kind: "collision",
                    key: Some("out".into()),
                    message: format!(
                        "output directory {} is not empty (use --force)",
                        dir.display()
                    ),
                });
            }
        }
        fs::create_dir_all(dir).map_err(CliError::io)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        fs::write(self.dir.join(name), contents).map_err(CliError::io)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(CliError::io)?;
        text.push('\n');
        self.write(name, text)
    }

    fn finish(
        mut self,
        command: Command,
        config: &RunConfig,
        seed: u64,
        chains: usize,
    ) -> Result<(), CliError> {
        self.files.sort();
        let manifest = json!({
            "command": command.name(),
            "config": config.entries(),
            "seed": seed,
            "chains": chains,
            "version": env!("CARGO_PKG_VERSION"),
            "files": self.files,
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(CliError::io)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text).map_err(CliError::io)
    }
}

/// Everything a command needs: merged configuration, seed, chain count and output.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub chains: usize,
    pub out: Output,
}

/// Merges the configuration file with flag overrides.
pub fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::config("set", format!("expected KEY=VALUE, found '{kv}'")))?;
        config.set(k.trim(), v.trim());
    }
    if let Some(seed) = cli.seed {
        config.set("seed", seed);
    }
    if let Some(out) = &cli.out {
        config.set("out", out.display());
    }
    if let Some(chains) = cli.chains {
        config.set("chains", chains);
    }
    Ok(config)
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = build_config(cli)?;
    let seed: u64 = config.get_or("seed", 1)?;
    let chains = config.positive("chains", 1)?;
    let out_dir: PathBuf = config
        .raw("out")
        .map(PathBuf::from)
        .ok_or_else(|| CliError::config("out", "missing output directory"))?;
    // validate everything before touching the file system
    commands::validate(cli.command, &config)?;
    let out = Output::create(&out_dir, cli.force)?;
    let mut ctx = Context {
        config,
        seed,
        chains,
        out,
    };
    commands::dispatch(cli.command, &mut ctx)?;
    let Context {
        config,
        seed,
        chains,
        out,
    } = ctx;
    out.finish(cli.command, &config, seed, chains)
}

/// Entry point used by the binary: parses arguments, runs, and reports errors.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
