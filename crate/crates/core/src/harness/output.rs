//! Result files. Every CSV starts with a `#` comment naming its schema
//! version, followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::workloads::{Measurement, RunResult};

use super::matrix::RunRecord;

pub const SCHEMA_VERSION: u32 = 1;
/// Written into the output directory when writing fails half-way.
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const EVENT_LOG_DIR: &str = "events";

pub const GOODPUT_COLUMNS: [&str; 7] = ["scenario", "measurement", "pep", "run", "t_ms", "interval_bytes", "cum_bytes"];
pub const CWND_COLUMNS: [&str; 7] = ["scenario", "measurement", "pep", "run", "t_ms", "cwnd_bytes", "ssthresh_bytes"];
pub const WEB_COLUMNS: [&str; 7] = ["scenario", "mode", "pep", "run", "rs_ms", "fcp_ms", "plt_ms"];
pub const BULK_COLUMNS: [&str; 7] = [
    "scenario",
    "measurement",
    "pep",
    "run",
    "establishment_ms",
    "ttfb_ms",
    "total_bytes",
];
pub const RUNS_COLUMNS: [&str; 7] = ["scenario", "measurement", "pep", "run", "seed", "status", "message"];

#[derive(Debug, Error)]
#[error("writing {path}: {source}")]
pub struct OutputError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn ms(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        String::new()
    }
}

struct Table {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl Table {
    fn create(dir: &Path, name: &str, columns: &[&str]) -> Result<Self, OutputError> {
        let path = dir.join(name);
        let io = |source| OutputError {
            path: path.clone(),
            source,
        };
        let mut file = BufWriter::new(File::create(&path).map_err(io)?);
        writeln!(file, "# satsplit {name} schema v{SCHEMA_VERSION}").map_err(io)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(columns).map_err(|e| io(e.into()))?;
        Ok(Table { path, w })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), OutputError> {
        self.w.write_record(fields).map_err(|e| OutputError {
            path: self.path.clone(),
            source: e.into(),
        })
    }

    fn finish(mut self) -> Result<(), OutputError> {
        self.w.flush().map_err(|source| OutputError {
            path: self.path.clone(),
            source,
        })
    }
}

fn write_all(records: &[RunRecord], dir: &Path) -> Result<(), OutputError> {
    let mut goodput = Table::create(dir, "goodput.csv", &GOODPUT_COLUMNS)?;
    let mut cwnd = Table::create(dir, "cwnd.csv", &CWND_COLUMNS)?;
    let mut web = Table::create(dir, "web.csv", &WEB_COLUMNS)?;
    let mut bulk = Table::create(dir, "bulk.csv", &BULK_COLUMNS)?;
    let mut runs = Table::create(dir, "runs.csv", &RUNS_COLUMNS)?;
    for r in records {
        let s = &r.spec;
        let key = [
            s.scenario_name.clone(),
            s.measurement.to_string(),
            s.pep.to_string(),
            s.run.to_string(),
        ];
        runs.row(&[
            key[0].clone(),
            key[1].clone(),
            key[2].clone(),
            key[3].clone(),
            s.seed.to_string(),
            r.status.as_str().to_string(),
            r.message.clone(),
        ])?;
        match &r.result {
            Some(RunResult::Bulk(b)) if r.is_ok() => {
                for g in &b.goodput {
                    let mut row = key.to_vec();
                    row.extend([g.t_ms.to_string(), g.interval_bytes.to_string(), g.cum_bytes.to_string()]);
                    goodput.row(&row)?;
                }
                for c in &b.cwnd {
                    let mut row = key.to_vec();
                    row.extend([
                        c.t_ms.to_string(),
                        c.cwnd_bytes.to_string(),
                        c.ssthresh_bytes.map_or_else(String::new, |v| v.to_string()),
                    ]);
                    cwnd.row(&row)?;
                }
                let mut row = key.to_vec();
                row.extend([
                    ms(b.establishment_ms),
                    b.ttfb_ms.map_or_else(String::new, ms),
                    b.total_bytes.to_string(),
                ]);
                bulk.row(&row)?;
            }
            Some(RunResult::Web(w)) if r.is_ok() => {
                let mode = match s.measurement {
                    Measurement::H1Web => "h1",
                    _ => "h3",
                };
                web.row(&[
                    key[0].clone(),
                    mode.to_string(),
                    key[2].clone(),
                    key[3].clone(),
                    ms(w.rs_ms),
                    ms(w.fcp_ms),
                    ms(w.plt_ms),
                ])?;
            }
            _ => {}
        }
    }
    for t in [goodput, cwnd, web, bulk, runs] {
        t.finish()?;
    }
    Ok(())
}

/// Writes the five CSVs into `dir`. On failure a `PARTIAL` marker holding
/// the error is left behind.
pub fn write_results(records: &[RunRecord], dir: &Path) -> Result<(), OutputError> {
    let res = std::fs::create_dir_all(dir)
        .map_err(|source| OutputError {
            path: dir.to_path_buf(),
            source,
        })
        .and_then(|()| write_all(records, dir));
    let marker = dir.join(PARTIAL_MARKER);
    match &res {
        // best effort: the directory itself may be what failed
        Err(e) => drop(std::fs::write(&marker, format!("{e}\n"))),
        Ok(()) if marker.exists() => drop(std::fs::remove_file(&marker)),
        Ok(()) => {}
    }
    res
}
