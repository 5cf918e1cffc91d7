use std::path::PathBuf;

use serde::Serialize;

use crate::workloads::{run_bulk, run_web, HttpMode, Measurement, RunOutput, RunResult};

use super::config::Scenario;

/// One cell of the run matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSpec {
    /// Index into the scenario list the matrix was planned from.
    pub scenario: usize,
    pub scenario_name: String,
    pub measurement: Measurement,
    pub pep: bool,
    pub run: u32,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    ConnectTimeout,
    ProxyError,
    ProxyOverload,
    TransportError,
    NetworkError,
    Incomplete,
    LogWriteFailed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::ConnectTimeout => "connect_timeout",
            RunStatus::ProxyError => "proxy_error",
            RunStatus::ProxyOverload => "proxy_overload",
            RunStatus::TransportError => "transport_error",
            RunStatus::NetworkError => "network_error",
            RunStatus::Incomplete => "incomplete",
            RunStatus::LogWriteFailed => "log_write_failed",
        }
    }

    fn from_label(label: &str) -> Self {
        match label {
            "connect_timeout" => RunStatus::ConnectTimeout,
            "proxy_error" => RunStatus::ProxyError,
            "proxy_overload" => RunStatus::ProxyOverload,
            "network_error" => RunStatus::NetworkError,
            "incomplete" => RunStatus::Incomplete,
            _ => RunStatus::TransportError,
        }
    }
}

/// Outcome of one run. Failed runs keep their spec so they can be reported.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub status: RunStatus,
    pub message: String,
    pub result: Option<RunResult>,
    pub events_processed: u64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Jobs {
    Sequential,
    /// Rayon pool of this many threads; sequential without the `parallel`
    /// feature.
    Threads(usize),
}

impl Jobs {
    pub fn from_count(n: usize) -> Self {
        if n <= 1 {
            Jobs::Sequential
        } else {
            Jobs::Threads(n)
        }
    }
}

/// Expands scenarios into runs ordered by scenario, measurement, PEP arm
/// and repetition. `seed = base_seed + run`.
pub fn plan(scenarios: &[Scenario]) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for (i, s) in scenarios.iter().enumerate() {
        for &measurement in &s.measurements {
            for &pep in &s.pep.enabled {
                for run in 0..s.repetitions {
                    specs.push(RunSpec {
                        scenario: i,
                        scenario_name: s.name.clone(),
                        measurement,
                        pep,
                        run,
                        seed: s.base_seed.wrapping_add(u64::from(run)),
                    });
                }
            }
        }
    }
    specs
}

/// File name of a run's event log.
pub fn event_log_name(spec: &RunSpec) -> String {
    format!(
        "{}_{}_{}_{}.jsonl",
        spec.scenario_name,
        spec.measurement,
        if spec.pep { "pep" } else { "nopep" },
        spec.run
    )
}

/// Runs one matrix cell in a fresh simulation. The event log, if any, is
/// handed back separately so callers can persist it without keeping it.
pub fn run_one(scenario: &Scenario, spec: &RunSpec, event_log: bool) -> (RunRecord, Vec<u8>) {
    let setup = scenario.setup(spec.measurement, spec.pep, spec.seed, event_log);
    let profile = scenario.profile(spec.measurement);
    let outcome: Result<RunOutput, _> = match spec.measurement {
        Measurement::QuicBulk | Measurement::TcpBulk => run_bulk(&setup, profile, scenario.duration),
        Measurement::H3Web => run_web(&setup, HttpMode::H3, profile, &scenario.manifest, scenario.web_timeout),
        Measurement::H1Web => run_web(&setup, HttpMode::H1, profile, &scenario.manifest, scenario.web_timeout),
    };
    match outcome {
        Ok(out) => (
            RunRecord {
                spec: spec.clone(),
                status: RunStatus::Ok,
                message: String::new(),
                result: Some(out.result),
                events_processed: out.events_processed,
            },
            out.event_log,
        ),
        Err(f) => (
            RunRecord {
                spec: spec.clone(),
                status: RunStatus::from_label(f.status),
                message: f.message,
                result: None,
                events_processed: 0,
            },
            f.event_log,
        ),
    }
}

fn run_and_log(scenarios: &[Scenario], spec: &RunSpec, log_dir: Option<&PathBuf>) -> RunRecord {
    let (mut record, log) = run_one(&scenarios[spec.scenario], spec, log_dir.is_some());
    if let Some(dir) = log_dir {
        let path = dir.join(event_log_name(spec));
        if let Err(e) = std::fs::write(&path, log) {
            record.status = RunStatus::LogWriteFailed;
            record.message = format!("{}: {e}", path.display());
        }
    }
    record
}

/// Runs every spec and returns records in spec order, whatever the
/// parallelism. With `log_dir`, each run's event log is written there as
/// soon as the run ends.
pub fn execute(scenarios: &[Scenario], specs: &[RunSpec], jobs: Jobs, log_dir: Option<&PathBuf>) -> Vec<RunRecord> {
    match jobs {
        Jobs::Sequential => execute_sequential(scenarios, specs, log_dir),
        Jobs::Threads(n) => execute_threads(scenarios, specs, n, log_dir),
    }
}

fn execute_sequential(scenarios: &[Scenario], specs: &[RunSpec], log_dir: Option<&PathBuf>) -> Vec<RunRecord> {
    specs
        .iter()
        .map(|s| run_and_log(scenarios, s, log_dir))
        .collect()
}

#[cfg(feature = "parallel")]
fn execute_threads(scenarios: &[Scenario], specs: &[RunSpec], n: usize, log_dir: Option<&PathBuf>) -> Vec<RunRecord> {
    use rayon::prelude::*;
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(p) => p,
        Err(_) => return execute_sequential(scenarios, specs, log_dir),
    };
    pool.install(|| {
        specs
            .par_iter()
            .map(|s| run_and_log(scenarios, s, log_dir))
            .collect()
    })
}

#[cfg(not(feature = "parallel"))]
fn execute_threads(scenarios: &[Scenario], specs: &[RunSpec], _n: usize, log_dir: Option<&PathBuf>) -> Vec<RunRecord> {
    execute_sequential(scenarios, specs, log_dir)
}
