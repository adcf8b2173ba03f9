//! Run records and output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{Command, RunConfig};

/// Encoding used for tabular outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
}

/// Everything a run produced, written as `run_record.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub version: &'static str,
    pub command: Command,
    pub threads: usize,
    pub format: Format,
    pub config: RunConfig,
    pub outputs: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub timings: Vec<StageTiming>,
    pub files: Vec<FileEntry>,
}

pub const RECORD_FILE: &str = "run_record.json";

/// Collects outputs while a command runs.
pub struct Recorder {
    record: RunRecord,
    out_dir: PathBuf,
}

impl Recorder {
    pub fn new(config: RunConfig, command: Command, threads: usize, format: Format, out_dir: PathBuf) -> Self {
        Self {
            record: RunRecord {
                version: env!("CARGO_PKG_VERSION"),
                command,
                threads,
                format,
                config,
                outputs: BTreeMap::new(),
                checks: Vec::new(),
                warnings: Vec::new(),
                timings: Vec::new(),
                files: Vec::new(),
            },
            out_dir,
        }
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    /// Runs `f` and logs its wall time under `stage`.
    pub fn stage<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{stage}: {seconds:.3} s");
        self.record.timings.push(StageTiming {
            stage: stage.into(),
            seconds,
        });
        out
    }

    pub fn output(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("output serialises");
        self.record.outputs.insert(key.into(), value);
    }

    /// Records `value <= bound`.
    pub fn check_le(&mut self, name: &str, value: f64, bound: f64) -> bool {
        let passed = value <= bound;
        if !passed {
            log::warn!("check {name} failed: {value} > {bound}");
        }
        self.record.checks.push(Check {
            name: name.into(),
            value,
            bound,
            passed,
        });
        passed
    }

    /// Records a boolean check, stored as `value = 0` when it holds.
    pub fn check_true(&mut self, name: &str, ok: bool) -> bool {
        self.check_le(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.record.warnings.push(msg);
    }

    pub fn warnings(&mut self, msgs: &[String]) {
        for m in msgs {
            self.warn(m.clone());
        }
    }

    pub fn all_passed(&self) -> bool {
        self.record.checks.iter().all(|c| c.passed)
    }

    /// Writes a table given as CSV text, converting it when the format is
    /// JSON. `stem` has no extension.
    pub fn table(&mut self, stem: &str, csv_text: &str) -> anyhow::Result<()> {
        match self.record.format {
            Format::Csv => self.file(&format!("{stem}.csv"), csv_text.as_bytes()),
            Format::Json => {
                let json = csv_to_json(csv_text)?;
                self.file(&format!("{stem}.json"), json.as_bytes())
            }
        }
    }

    pub fn file(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record.files.push(FileEntry {
            path: name.into(),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes `run_record.json` and returns the record. The manifest lists
    /// every other file the run wrote.
    pub fn finish(self) -> anyhow::Result<RunRecord> {
        let path = self.out_dir.join(RECORD_FILE);
        let text = serde_json::to_string_pretty(&self.record)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(self.record)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }
}

/// Array of row objects keyed by the header; numeric cells become numbers.
pub fn csv_to_json(csv_text: &str) -> anyhow::Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        let mut obj = Map::new();
        for (key, cell) in header.iter().zip(row.iter()) {
            let value = match cell.parse::<f64>() {
                Ok(x) => serde_json::Number::from_f64(x).map_or_else(|| Value::String(cell.into()), Value::Number),
                Err(_) => Value::String(cell.into()),
            };
            obj.insert(key.into(), value);
        }
        rows.push(Value::Object(obj));
    }
    Ok(serde_json::to_string_pretty(&rows)? + "\n")
}
