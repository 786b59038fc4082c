//! CSV emission with fixed schemas and deterministic formatting, plus the
//! append-only generic result records and the provenance manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

/// Deterministic float formatting shared by every CSV writer.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.12e}")
    }
}

pub struct CsvWriter {
    path: PathBuf,
    lines: Vec<String>,
}

impl CsvWriter {
    pub fn new(path: impl AsRef<Path>, header: &str) -> Self {
        CsvWriter {
            path: path.as_ref().to_path_buf(),
            lines: vec![header.to_string()],
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn finish(self) -> Result<PathBuf> {
        let mut out = fs::File::create(&self.path)?;
        for line in &self.lines {
            writeln!(out, "{line}")?;
        }
        Ok(self.path)
    }
}

/// One generic metric row: `metric,slice,t,lambda,value,provenance`.
#[derive(Debug, Clone)]
pub struct ResultRecord {
    pub metric: String,
    pub slice: usize,
    pub t: f64,
    pub lambda: f64,
    pub value: f64,
    pub provenance: String,
}

pub struct RecordSink {
    writer: CsvWriter,
}

impl RecordSink {
    pub fn new(dir: &Path, provenance: &str) -> Self {
        let _ = provenance;
        RecordSink {
            writer: CsvWriter::new(dir.join("records.csv"), "metric,slice,t,lambda,value,provenance"),
        }
    }

    pub fn push(&mut self, r: ResultRecord) {
        self.writer.row(&[
            r.metric,
            r.slice.to_string(),
            fmt_f64(r.t),
            fmt_f64(r.lambda),
            fmt_f64(r.value),
            r.provenance,
        ]);
    }

    pub fn finish(self) -> Result<PathBuf> {
        self.writer.finish()
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub experiment: &'a str,
    pub config_hash: String,
    pub config_toml: String,
    pub version: &'a str,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest<'_>) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(path)
}
