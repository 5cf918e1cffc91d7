//! The two measurement types: a 15 s bulk download and a web page load.

mod bulk;
mod manifest;
mod web;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::emunet::{Direction, LinkId, LinkStats};
use crate::sim::{App, SimFailure, SimSetup, Simulation};
use crate::time::SimTime;

pub use bulk::{run_bulk, BulkClient, BulkServer};
pub use manifest::{ManifestError, ObjectSpec, PageManifest};
pub use web::{run_web, HttpMode, WebClient, WebServer, MAX_PARALLEL};

/// Size of a modeled request message.
pub const REQUEST_BYTES: u64 = 100;
pub const SAMPLE_INTERVAL: SimTime = SimTime::from_millis(100);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Measurement {
    #[serde(rename = "quic-bulk")]
    QuicBulk,
    #[serde(rename = "tcp-bulk")]
    TcpBulk,
    #[serde(rename = "h3-web")]
    H3Web,
    #[serde(rename = "h1-web")]
    H1Web,
}

impl Measurement {
    pub const ALL: [Measurement; 4] = [
        Measurement::QuicBulk,
        Measurement::TcpBulk,
        Measurement::H3Web,
        Measurement::H1Web,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measurement::QuicBulk => "quic-bulk",
            Measurement::TcpBulk => "tcp-bulk",
            Measurement::H3Web => "h3-web",
            Measurement::H1Web => "h1-web",
        }
    }

    pub fn is_bulk(self) -> bool {
        matches!(self, Measurement::QuicBulk | Measurement::TcpBulk)
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measurement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measurement::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown measurement {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GoodputSample {
    /// End of the 100 ms interval.
    pub t_ms: u64,
    pub interval_bytes: u64,
    pub cum_bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CwndSample {
    pub t_ms: u64,
    pub cwnd_bytes: u64,
    /// `None` while the threshold is still unset.
    pub ssthresh_bytes: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BulkResult {
    pub establishment_ms: f64,
    pub ttfb_ms: Option<f64>,
    pub goodput: Vec<GoodputSample>,
    pub cwnd: Vec<CwndSample>,
    pub total_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WebResult {
    pub rs_ms: f64,
    pub fcp_ms: f64,
    pub plt_ms: f64,
    /// `(object id, completion ms)` in completion order.
    pub objects: Vec<(u32, f64)>,
    /// Most streams (h3) or connections (h1) ever active at once.
    pub peak_parallel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunResult {
    Bulk(BulkResult),
    Web(WebResult),
}

/// A completed run together with network-level diagnostics.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: RunResult,
    pub links: Vec<(LinkId, LinkStats)>,
    /// Arrival times and sizes on the forward satellite link, when recorded.
    pub sat_forward_deliveries: Option<Vec<(SimTime, u32)>>,
    pub event_log: Vec<u8>,
    pub events_processed: u64,
}

/// A failed run: status label, message and the partial event log.
#[derive(Debug)]
pub struct RunFailure {
    pub status: &'static str,
    pub message: String,
    pub event_log: Vec<u8>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.status, self.message)
    }
}

impl std::error::Error for RunFailure {}

fn failure<C, S>(sim: &mut Simulation<C, S>, status: &'static str, message: String) -> RunFailure {
    RunFailure {
        status,
        message,
        event_log: sim.net.take_log().into_bytes(),
    }
}

fn sim_failure<C, S>(sim: &mut Simulation<C, S>, err: SimFailure) -> RunFailure {
    let status = err.source.status();
    failure(sim, status, err.to_string())
}

fn finish<C: App, S: App>(sim: &mut Simulation<C, S>, result: RunResult, events: u64) -> RunOutput {
    let links = sim
        .net
        .link_ids()
        .map(|id| (id, *sim.net.link(id).stats()))
        .collect();
    // the satellite hop sits just before the server-side proxy in the
    // standard chain
    let sat_hop = sim.net.node_count().saturating_sub(3).min(1);
    let sat_forward_deliveries = sim
        .net
        .link(LinkId::new(sat_hop, Direction::Forward))
        .deliveries()
        .map(<[_]>::to_vec);
    RunOutput {
        result,
        links,
        sat_forward_deliveries,
        event_log: sim.net.take_log().into_bytes(),
        events_processed: events,
    }
}

fn start<C: App, S: App>(setup: &SimSetup, client: C, server: S) -> Result<Simulation<C, S>, RunFailure> {
    let mut sim = Simulation::new(setup, client, server);
    if let Err(e) = sim.start() {
        return Err(failure(&mut sim, e.status(), e.to_string()));
    }
    Ok(sim)
}
