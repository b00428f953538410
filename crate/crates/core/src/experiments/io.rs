//! CSV, checkpoint and manifest files.
//!
//! Floats are written with 17 significant digits so a text round trip is exact.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CacheKey, CloneRecord, NResult, SweepConfig, SweepRow};
use crate::cache::{invalid, sha256_file, write_atomic};
use crate::error::Result;

pub const SAMPLE_COLUMNS: [&str; 9] = ["n", "sample_index", "theta", "phi", "f1", "f2", "f_sym", "degeneracy", "seed"];
pub const SUMMARY_COLUMNS: [&str; 8] =
    ["n", "mean_f_sym", "std_f_sym", "mean_f1", "mean_f2", "samples", "degenerate_count", "wall_seconds"];

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
}

pub fn write_samples_csv(path: &Path, records: &[CloneRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        vec![
            r.n.to_string(),
            r.sample_index.to_string(),
            float(r.theta),
            float(r.phi),
            float(r.f1),
            float(r.f2),
            float(r.f_sym),
            r.degeneracy.to_string(),
            r.seed.to_string(),
        ]
    });
    write_atomic(path, &to_csv(&SAMPLE_COLUMNS, rows)?)
}

pub fn write_summary_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let lines = rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            float(r.mean_f_sym),
            float(r.std_f_sym),
            float(r.mean_f1),
            float(r.mean_f2),
            r.samples.to_string(),
            r.degenerate_count.to_string(),
            float(r.wall_seconds),
        ]
    });
    write_atomic(path, &to_csv(&SUMMARY_COLUMNS, lines)?)
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, columns: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != columns {
        return Err(invalid(path, format!("columns {header:?}, expected {columns:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<CloneRecord>> {
    read_csv(path, &SAMPLE_COLUMNS)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SweepRow>> {
    read_csv(path, &SUMMARY_COLUMNS)
}

/// Progress of a sweep, rewritten after every completed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SweepConfig,
    pub completed: Vec<NResult>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    /// `None` if the file is unreadable as a checkpoint, which just means starting over.
    pub fn load(path: &Path) -> Result<Option<Self>> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text).ok())
    }
}

/// A failed sample or a failed `n` (`sample_index` absent), for the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub n: usize,
    pub sample_index: Option<usize>,
    pub seed: Option<u64>,
    pub reason: String,
}

impl FailureRecord {
    pub(super) fn from_result(r: &NResult) -> Vec<Self> {
        let whole = r.error.iter().map(|e| Self { n: r.n, sample_index: None, seed: None, reason: e.clone() });
        let samples = r.failures.iter().map(|f| Self {
            n: f.n,
            sample_index: Some(f.sample_index),
            seed: Some(f.seed),
            reason: f.reason.clone(),
        });
        whole.chain(samples).collect()
    }
}

/// An output file with its hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// What a CLI run did: its configuration, the caches it read or wrote, its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub timestamp: String,
    pub config: serde_json::Value,
    pub cache_keys: Vec<CacheKey>,
    pub outputs: Vec<OutputFile>,
    pub failures: Vec<FailureRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config,
            cache_keys: Vec::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(OutputFile { path: path.to_path_buf(), sha256: sha256_file(path)? });
        Ok(())
    }

    /// Re-hashes every cache file and writes the manifest; fails if any cache changed.
    pub fn finish(&self, path: &Path) -> Result<()> {
        for key in &self.cache_keys {
            key.verify()?;
        }
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| invalid(path, e.to_string()))
    }
}
