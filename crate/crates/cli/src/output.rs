//! CSV tables with a commented preamble.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Table {
    pub comments: Vec<(String, String)>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Preamble with the tool version, command, seed and a SHA-256 of the
    /// resolved parameters.
    pub fn new(command: &str, seed: u64, resolved: &str, header: Vec<&'static str>) -> Self {
        let hash = hex::encode(Sha256::digest(resolved.as_bytes()));
        Table {
            comments: vec![
                ("kcm".into(), format!("v{}", env!("CARGO_PKG_VERSION"))),
                ("command".into(), command.into()),
                ("seed".into(), seed.to_string()),
                ("config_sha256".into(), hash),
            ],
            header,
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.comments.push((key.into(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        for (k, v) in &self.comments {
            writeln!(buf, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

/// Writes `bytes` to `path` through a sibling temporary file, so a failed
/// write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    let res = std::fs::write(&tmp, bytes).and_then(|_| std::fs::rename(&tmp, path));
    if res.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    res.with_context(|| format!("writing {}", path.display()))
}

pub fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    let bytes = table.render()?;
    match out {
        Some(p) => write_atomic(p, &bytes),
        None => {
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

/// Shortest round-trip formatting, exponent form for very small or large
/// magnitudes; NaN and infinities spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x != 0.0 && !(1e-6..1e15).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn dims(d: &[usize]) -> String {
    d.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
}
