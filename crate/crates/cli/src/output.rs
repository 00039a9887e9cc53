//! CSV tables, JSON files and the resolved-config sidecar.
//!
//! CSV dialect: comma separated, `.` decimal point, `#`-prefixed metadata
//! lines (the first one names the schema and its version), then a header row.
//! Floats use the shortest representation that parses back to the same bits.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use lpcluster::EstimateResult;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn schema_id(kind: &str) -> String {
    format!("lpcluster.{kind} v{SCHEMA_VERSION}")
}

pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, header: Vec<&'static str>) -> Self {
        Table {
            comments: vec![format!("schema: {}", schema_id(kind))],
            header,
            rows: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for c in &self.comments {
            for line in c.lines() {
                buf.extend_from_slice(format!("# {line}\n").as_bytes());
            }
        }
        let mut w = csv::Writer::from_writer(buf);
        let csv_err = |source| CliError::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let buf = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
        write_bytes(path, &buf)
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const ESTIMATE_HEADER: [&str; 10] = [
    "estimator",
    "p",
    "alpha",
    "k",
    "b",
    "m",
    "estimate",
    "plug_in_variance",
    "threshold",
    "seed",
];

pub fn estimate_row(r: &EstimateResult) -> Vec<String> {
    vec![
        r.estimator.clone(),
        r.p.to_string(),
        num(r.alpha),
        r.k.to_string(),
        r.b.to_string(),
        r.m.to_string(),
        num(r.estimate),
        num(r.plug_in_variance),
        num(r.threshold),
        opt(r.seed),
    ]
}

/// `<prefix><suffix>`, keeping any directory part of `prefix`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `run.csv` -> `run.config.json`, `mc` -> `mc.config.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}
