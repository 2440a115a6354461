//! Configuration, command drivers and artifact files behind the `reslab` binary.
//!
//! Every command returns an [`Outcome`] listing the files it wrote and the
//! named checks it ran; [`Outcome::exit_code`] is 0 when all checks pass and 2
//! otherwise. Errors map to 3 (configuration / missing inputs) or 4
//! (numerical failure).

mod commands;
mod config;
mod output;
mod report;

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

pub use commands::{cmd_aniso, cmd_bounds, cmd_resonances};
pub use config::{AnisoSpec, BoundsSpec, MapId, MapSpec, ResonanceSpec, RunConfig, WeightSpec};
pub use output::{csv_header, Meta};
pub use report::{cmd_report, ARTIFACTS, PLOT_FILES};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no artifacts found in {dir} (looked for {expected:?})")]
    MissingArtifacts { dir: String, expected: Vec<String> },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn numerical(e: impl std::fmt::Display) -> Self {
        CliError::Numerical(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingArtifacts { .. } => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_error",
            CliError::Numerical(_) => "numerical_failure",
            CliError::MissingArtifacts { .. } => "missing_artifacts",
            CliError::Io(_) => "io_error",
        }
    }

    /// Machine-readable failure record.
    pub fn to_json(&self, command: &str) -> serde_json::Value {
        json!({
            "command": command,
            "status": self.kind(),
            "exit_code": self.exit_code(),
            "reason": self.to_string(),
        })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }

    /// Status record printed by the binary; failed checks are listed by name.
    pub fn to_json(&self) -> serde_json::Value {
        let failed: Vec<&Check> = self.checks.iter().filter(|c| !c.pass).collect();
        json!({
            "command": self.command,
            "status": if self.pass() { "pass" } else { "check_failed" },
            "exit_code": self.exit_code(),
            "failed_checks": failed,
            "files": self.files,
            "warnings": self.warnings,
        })
    }
}

/// Which command to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Resonances,
    Bounds,
    Aniso,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Resonances => "resonances",
            Command::Bounds => "bounds",
            Command::Aniso => "aniso",
        }
    }
}

/// Validates and runs one command; warnings end up in the outcome and in the
/// command's JSON artifact.
pub fn run_with_config(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cmd {
        Command::Resonances => cmd_resonances(cfg),
        Command::Bounds => cmd_bounds(cfg),
        Command::Aniso => cmd_aniso(cfg),
    }
}

/// Reads a TOML config and applies the `--seed` / `--out` overrides.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
    Ok(cfg)
}
