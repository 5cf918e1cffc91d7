//! Scenario files, the run matrix and result persistence.

pub mod config;
pub mod matrix;
pub mod output;

use std::path::Path;

pub use config::{load_config, parse_config, presets, ConfigError, Preset, Scenario};
pub use matrix::{execute, plan, run_one, Jobs, RunRecord, RunSpec, RunStatus};
pub use output::{write_results, OutputError, PARTIAL_MARKER};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatrixSummary {
    pub runs: usize,
    pub failed: usize,
}

/// Plans, executes and persists the whole matrix into `out_dir`.
pub fn run_matrix(
    scenarios: &[Scenario],
    out_dir: &Path,
    jobs: Jobs,
    event_logs: bool,
) -> Result<(MatrixSummary, Vec<RunRecord>), OutputError> {
    let specs = plan(scenarios);
    let log_dir = event_logs.then(|| out_dir.join(output::EVENT_LOG_DIR));
    if let Some(dir) = &log_dir {
        std::fs::create_dir_all(dir).map_err(|source| OutputError {
            path: dir.clone(),
            source,
        })?;
    }
    let records = execute(scenarios, &specs, jobs, log_dir.as_ref());
    write_results(&records, out_dir)?;
    let summary = MatrixSummary {
        runs: records.len(),
        failed: records.iter().filter(|r| !r.is_ok()).count(),
    };
    Ok((summary, records))
}
