//! Deterministic file output: CSV tables, JSON reports, golden-value
//! records and run manifests.
//!
//! Every artifact embeds the tool version, the configuration hash and the
//! master seed, and all formatting is locale-free shortest-roundtrip, so a
//! rerun with the same triple reproduces files byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::stats::EstimateWithCI;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A CSV table with the fixed estimator schema
/// `(method, t, x, estimate, se, replicas, seed)`; `x` is empty for
/// curve-level rows.
#[derive(Debug, Clone, Default)]
pub struct EstimateTable {
    pub rows: Vec<EstimateRow>,
}

#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub method: String,
    pub t: f64,
    pub x: Option<i64>,
    pub estimate: f64,
    pub se: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl EstimateTable {
    pub fn push(
        &mut self,
        method: &str,
        t: f64,
        x: Option<i64>,
        est: EstimateWithCI,
        seed: u64,
    ) {
        self.rows.push(EstimateRow {
            method: method.to_string(),
            t,
            x,
            estimate: est.value,
            se: est.se,
            replicas: est.n,
            seed,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,t,x,estimate,se,replicas,seed\n");
        for r in &self.rows {
            let x = r.x.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method, r.t, x, r.estimate, r.se, r.replicas, r.seed
            )
            .unwrap();
        }
        out
    }

    /// Parses the fixed schema back; used by the report command.
    pub fn from_csv(text: &str) -> io::Result<EstimateTable> {
        let mut rows = Vec::new();
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "method,t,x,estimate,se,replicas,seed" {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "unexpected CSV header"));
        }
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("line {}: expected 7 fields", ln + 2),
                ));
            }
            let parse_f = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("bad {what}: {s}"))
                })
            };
            rows.push(EstimateRow {
                method: fields[0].to_string(),
                t: parse_f(fields[1], "t")?,
                x: if fields[2].is_empty() { None } else { fields[2].parse().ok() },
                estimate: parse_f(fields[3], "estimate")?,
                se: parse_f(fields[4], "se")?,
                replicas: fields[5].parse().unwrap_or(0),
                seed: fields[6].parse().unwrap_or(0),
            });
        }
        Ok(EstimateTable { rows })
    }

    /// Extracts a `(ts, values, ses)` curve for one method tag.
    pub fn curve(&self, method: &str) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        let mut es = Vec::new();
        for r in self.rows.iter().filter(|r| r.method == method && r.x.is_none()) {
            ts.push(r.t);
            vs.push(r.estimate);
            es.push(r.se);
        }
        (ts, vs, es)
    }
}

/// FNV-1a over the canonical config text; stable across runs and platforms.
pub fn config_hash(canonical: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in canonical.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Manifest written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub operation: String,
    pub tool_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    /// Honors SOURCE_DATE_EPOCH so reproducibility checks can pin it.
    pub created_unix: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(operation: &str, config_hash: String, master_seed: u64) -> Self {
        let created_unix = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        RunManifest {
            operation: operation.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash,
            master_seed,
            created_unix,
            outputs: Vec::new(),
        }
    }

    /// Records an output by file name; manifests stay location-independent
    /// so reruns into different directories compare byte-identical.
    pub fn record(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string_lossy().into_owned());
        self.outputs.push(name);
        self.outputs.sort();
    }

    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self).unwrap() + "\n")?;
        Ok(path)
    }
}

/// A golden oracle value with its inputs and tolerance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GoldenRecord {
    pub operation: String,
    pub inputs: serde_json::Value,
    pub value: serde_json::Value,
    pub tolerance: f64,
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GoldenFile {
    pub tool_version: String,
    pub records: Vec<GoldenRecord>,
}

impl GoldenFile {
    pub fn load(path: &Path) -> io::Result<GoldenFile> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).unwrap() + "\n")
    }

    /// Compares scalar record values against another file: true when every
    /// matching record agrees within its stored tolerance.
    pub fn within_tolerance(&self, other: &GoldenFile) -> bool {
        if self.records.len() != other.records.len() {
            return false;
        }
        self.records.iter().zip(&other.records).all(|(a, b)| {
            if a.operation != b.operation || a.inputs != b.inputs {
                return false;
            }
            match (a.value.as_f64(), b.value.as_f64()) {
                (Some(x), Some(y)) => (x - y).abs() <= a.tolerance,
                _ => {
                    // Vector-valued records: compare element-wise.
                    match (a.value.as_array(), b.value.as_array()) {
                        (Some(xs), Some(ys)) if xs.len() == ys.len() => {
                            xs.iter().zip(ys).all(|(x, y)| match (x.as_f64(), y.as_f64()) {
                                (Some(x), Some(y)) => (x - y).abs() <= a.tolerance,
                                _ => false,
                            })
                        }
                        _ => a.value == b.value,
                    }
                }
            }
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)
}
