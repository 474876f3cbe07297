//! CSV emission with fixed numeric formatting.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

/// Smallest probability written as-is; anything positive below it is written as 0 and flagged.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Decimal with 12 significant digits, never scientific notation.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// A probability and whether it was clamped to zero from below the floor.
pub fn probability(p: f64) -> (String, bool) {
    if p > 0.0 && p < PROBABILITY_FLOOR {
        ("0".into(), true)
    } else {
        (num(p), false)
    }
}

/// CSV document opened by a provenance comment and a header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(config_hash: &str, seed: u64, header: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# config_hash={config_hash} seed={seed}");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line: Vec<&str> = cells.iter().map(AsRef::as_ref).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}
