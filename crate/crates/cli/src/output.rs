//! CSV/JSON emission with reproducibility headers.
//!
//! Every output file starts with `#`-prefixed comment lines carrying the
//! config hash, the effective seed, component versions, and the modeling
//! conventions in force (rate-distortion model, zero-rate no-op rule), so a
//! result file is attributable to the exact inputs that produced it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub const CLI_VERSION: &str = env!("CARGO_PKG_VERSION");

/// First 16 hex digits of the SHA-256 of the raw config bytes.
pub fn config_hash(raw: &[u8]) -> String {
    let digest = Sha256::digest(raw);
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Shared reproducibility header for one command invocation.
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
    pub rd_model: String,
}

impl Meta {
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!(
                "# mpamp core={} cli={}",
                mpamp_core::VERSION,
                CLI_VERSION
            ),
            format!("# config_hash={} seed={}", self.config_hash, self.seed),
            format!("# rd_model={} rzero=noop", self.rd_model),
        ]
    }
}

/// Formats a float with the shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes comment lines, a header row, and data rows.
pub fn write_csv(
    dir: &Path,
    name: &str,
    meta: &Meta,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    for line in meta.comment_lines() {
        text.push_str(&line);
        text.push('\n');
    }
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Reads the `rate_bits` column of a schedule CSV (comment lines skipped).
pub fn read_schedule_csv(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read schedule {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{}: empty schedule file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let rate_idx = columns
        .iter()
        .position(|c| *c == "rate_bits")
        .ok_or_else(|| CliError::Config(format!("{}: no rate_bits column", path.display())))?;
    let mut rates = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let field = fields.get(rate_idx).ok_or_else(|| {
            CliError::Config(format!("{}: row {} is missing columns", path.display(), lineno + 2))
        })?;
        let rate: f64 = field.trim().parse().map_err(|e| {
            CliError::Config(format!("{}: row {}: bad rate: {e}", path.display(), lineno + 2))
        })?;
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err(CliError::Config(format!("{}: schedule has no rows", path.display())));
    }
    Ok(rates)
}
