//! CSV emission and the reproducibility manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ConfigFile;
use crate::CliError;

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e9)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV body built in memory so the digest covers exactly what is written.
#[derive(Debug, Default)]
pub struct Csv {
    body: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Csv::default();
        csv.row(header.iter().map(|s| s.to_string()));
        csv
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let line: Vec<String> = fields.into_iter().collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn into_string(self) -> String {
        self.body
    }
}

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written next to an output file as `<out>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct ExperimentManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub arguments: Vec<String>,
    pub master_seed: u64,
    pub config: Option<ConfigFile>,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes `body` to `out` (or stdout) and, for files, the manifest beside it.
pub fn emit(
    body: &str,
    out: Option<&Path>,
    command: &str,
    master_seed: u64,
    config: Option<ConfigFile>,
) -> Result<(), CliError> {
    let Some(path) = out else {
        print!("{body}");
        return Ok(());
    };
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let manifest = ExperimentManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        arguments: std::env::args().skip(1).collect(),
        master_seed,
        config,
        outputs: vec![OutputDigest { path: path.to_path_buf(), sha256: sha256_hex(body.as_bytes()) }],
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&mpath, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", mpath.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(2.0 / 3.0 * 1e-7), "6.66666667e-08");
        assert_eq!(fmt_num(123456789.0), "123456789");
        assert_eq!(fmt_num(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1e-5), "1e-05");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn rounding_can_bump_the_exponent() {
        // 9.9999999996 rounds to 10 at 9 digits
        assert_eq!(fmt_num(9.9999999996), "10");
        assert_eq!(fmt_num(99999.99999996), "100000");
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("/tmp/run.csv")), PathBuf::from("/tmp/run.csv.manifest.json"));
    }
}
