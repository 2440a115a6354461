use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CliError, RunConfig};

/// Provenance block carried by every JSON artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub map: String,
    pub version: String,
}

impl Meta {
    pub fn new(command: &str, cfg: &RunConfig, map_id: &str) -> Self {
        Meta {
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            map: map_id.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// First line of every text artifact.
pub fn csv_header(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed}\n")
}

/// Collects rows of a delimited table behind the provenance header.
pub(crate) struct Table {
    text: String,
    sep: &'static str,
}

impl Table {
    pub fn new(config_hash: &str, seed: u64, columns: &[&str], sep: &'static str) -> Self {
        let mut text = csv_header(config_hash, seed);
        if sep == "," {
            text.push_str(&columns.join(","));
        } else {
            let _ = write!(text, "# {}", columns.join(sep));
        }
        text.push('\n');
        Table { text, sep }
    }

    pub fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    pub fn row(&mut self, cells: &[Cell]) {
        let parts: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&parts.join(self.sep));
        self.text.push('\n');
    }

    pub fn write(self, path: &Path) -> Result<PathBuf, CliError> {
        std::fs::write(path, self.text)?;
        Ok(path.to_path_buf())
    }
}

pub(crate) enum Cell {
    F(f64),
    I(i64),
    S(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // `{}` on f64 is the shortest round-trip form, so reruns are byte-identical
            Cell::F(v) => format!("{v}"),
            Cell::I(v) => format!("{v}"),
            Cell::S(s) => s.clone(),
            Cell::Missing => "nan".into(),
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::F)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(path.to_path_buf())
}
