use satsplit::eventlog::{parse_log, LogRecord};
use satsplit::harness::{Preset, Scenario};
use satsplit::workloads::{run_bulk, run_web, BulkResult, HttpMode, Measurement, RunFailure, RunOutput, RunResult, WebResult};

pub fn scenario(preset: Preset, loss_pct: f64) -> Scenario {
    Scenario::preset(preset, loss_pct)
}

pub fn try_run(s: &Scenario, m: Measurement, pep: bool, seed: u64, log: bool) -> Result<RunOutput, RunFailure> {
    let setup = s.setup(m, pep, seed, log);
    let profile = s.profile(m);
    match m {
        Measurement::QuicBulk | Measurement::TcpBulk => run_bulk(&setup, profile, s.duration),
        Measurement::H3Web => run_web(&setup, HttpMode::H3, profile, &s.manifest, s.web_timeout),
        Measurement::H1Web => run_web(&setup, HttpMode::H1, profile, &s.manifest, s.web_timeout),
    }
}

pub fn run(s: &Scenario, m: Measurement, pep: bool, seed: u64, log: bool) -> RunOutput {
    try_run(s, m, pep, seed, log).unwrap_or_else(|e| panic!("{} {m} pep={pep} seed={seed}: {e}", s.name))
}

pub fn bulk(out: &RunOutput) -> &BulkResult {
    match &out.result {
        RunResult::Bulk(b) => b,
        RunResult::Web(_) => panic!("expected a bulk result"),
    }
}

pub fn web(out: &RunOutput) -> &WebResult {
    match &out.result {
        RunResult::Web(w) => w,
        RunResult::Bulk(_) => panic!("expected a web result"),
    }
}

pub fn records(out: &RunOutput) -> Vec<LogRecord> {
    parse_log(&out.event_log).expect("valid event log")
}

pub fn events<'a>(recs: &'a [LogRecord], event: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
    recs.iter().filter(move |r| r.event == event)
}

/// `(client endpoint, server endpoint, from node, to node)` of every
/// connection opened in the run.
pub fn connections(recs: &[LogRecord]) -> Vec<(u64, u64, u64, u64)> {
    events(recs, "connect")
        .map(|r| {
            let f = &r.fields;
            (
                f["client"].as_u64().unwrap(),
                f["server"].as_u64().unwrap(),
                f["from"].as_u64().unwrap(),
                f["to"].as_u64().unwrap(),
            )
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
