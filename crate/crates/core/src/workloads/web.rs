use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::emunet::NodeId;
use crate::pep::PREAMBLE_TAG;
use crate::sim::{App, Ctx, RunError, SimSetup};
use crate::time::SimTime;
use crate::transport::{ConnEvent, TransportProfile, PREAMBLE_STREAM};

use super::{finish, sim_failure, start, failure, PageManifest, RunFailure, RunOutput, RunResult, WebResult, REQUEST_BYTES};

/// Concurrent streams (h3) or connections (h1) per page load.
pub const MAX_PARALLEL: usize = 6;
const STEP: SimTime = SimTime::from_millis(100);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpMode {
    /// One multiplexed QUIC-like connection.
    H3,
    /// Up to six serial keep-alive TCP-like connections.
    H1,
}

impl fmt::Display for HttpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HttpMode::H3 => "h3",
            HttpMode::H1 => "h1",
        })
    }
}

#[derive(Debug)]
struct H1Conn {
    endpoint: usize,
    ready: bool,
    busy: Option<u32>,
}

/// Fetches a page: the root first, then everything it makes discoverable.
pub struct WebClient {
    mode: HttpMode,
    profile: TransportProfile,
    manifest: PageManifest,
    queue: VecDeque<u32>,
    completed: Vec<(u32, SimTime)>,
    rs: Option<SimTime>,
    peak_parallel: usize,
    // h3
    conn: Option<usize>,
    established: bool,
    preamble: bool,
    active: BTreeMap<u64, u32>,
    // h1
    conns: Vec<H1Conn>,
}

impl WebClient {
    pub fn new(mode: HttpMode, profile: TransportProfile, manifest: PageManifest) -> Self {
        let root = manifest.root().id;
        WebClient {
            mode,
            profile,
            manifest,
            queue: VecDeque::from([root]),
            completed: Vec::new(),
            rs: None,
            peak_parallel: 0,
            conn: None,
            established: false,
            preamble: false,
            active: BTreeMap::new(),
            conns: Vec::new(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.completed.len() == self.manifest.len()
    }

    fn root(&self) -> u32 {
        self.manifest.root().id
    }

    fn complete(&mut self, now: SimTime, object: u32) {
        self.completed.push((object, now));
        self.queue
            .extend(self.manifest.discovered_by(object).map(|o| o.id));
    }

    fn pump_h3(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        let Some(e) = self.conn else { return Ok(()) };
        if !(self.established && self.preamble) {
            return Ok(());
        }
        while self.active.len() < MAX_PARALLEL {
            let Some(obj) = self.queue.pop_front() else { break };
            let conn = ctx.conn_mut(e);
            let stream = conn.open_bidi();
            conn.send_message(stream, REQUEST_BYTES, u64::from(obj), true)
                .map_err(|source| RunError::Transport { endpoint: e, source })?;
            self.active.insert(stream, obj);
        }
        self.peak_parallel = self.peak_parallel.max(self.active.len());
        Ok(())
    }

    fn pump_h1(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        for c in self.conns.iter_mut().filter(|c| c.ready && c.busy.is_none()) {
            let Some(obj) = self.queue.pop_front() else { break };
            ctx.conn_mut(c.endpoint)
                .send_message(0, REQUEST_BYTES, u64::from(obj), false)
                .map_err(|source| RunError::Transport { endpoint: c.endpoint, source })?;
            c.busy = Some(obj);
        }
        // open another connection only for requests that no handshaking
        // connection will pick up
        let mut pending = self.conns.iter().filter(|c| !c.ready).count();
        while self.conns.len() < MAX_PARALLEL && self.queue.len() > pending {
            let to = ctx.first_hop();
            let endpoint = ctx.connect(NodeId::CLIENT, to, self.profile);
            self.conns.push(H1Conn {
                endpoint,
                ready: false,
                busy: None,
            });
            pending += 1;
        }
        self.peak_parallel = self.peak_parallel.max(self.conns.len());
        Ok(())
    }

    fn pump(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        match self.mode {
            HttpMode::H3 => self.pump_h3(ctx),
            HttpMode::H1 => self.pump_h1(ctx),
        }
    }

    fn into_result(self) -> WebResult {
        let ms = |t: SimTime| t.as_millis_f64();
        let fcp = self
            .completed
            .iter()
            .filter(|(id, _)| self.manifest.get(*id).is_some_and(|o| o.render_critical))
            .map(|(_, t)| *t)
            .max()
            .unwrap_or_default();
        let plt = self.completed.iter().map(|(_, t)| *t).max().unwrap_or_default();
        WebResult {
            rs_ms: self.rs.map_or(f64::NAN, ms),
            fcp_ms: ms(fcp),
            plt_ms: ms(plt),
            objects: self.completed.iter().map(|&(id, t)| (id, ms(t))).collect(),
            peak_parallel: self.peak_parallel,
        }
    }
}

impl App for WebClient {
    fn start(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        match self.mode {
            HttpMode::H3 => {
                let to = ctx.first_hop();
                self.conn = Some(ctx.connect(NodeId::CLIENT, to, self.profile));
                Ok(())
            }
            HttpMode::H1 => self.pump_h1(ctx),
        }
    }

    fn on_event(&mut self, ctx: &mut Ctx, endpoint: usize, event: ConnEvent) -> Result<(), RunError> {
        let root = self.root();
        match (self.mode, event) {
            (_, ConnEvent::ConnectTimeout) => return Err(RunError::ConnectTimeout),
            (HttpMode::H3, ConnEvent::HandshakeComplete) => self.established = true,
            (HttpMode::H3, ConnEvent::Preamble) => self.preamble = true,
            (HttpMode::H3, ConnEvent::MessageComplete { stream: PREAMBLE_STREAM, tag: PREAMBLE_TAG }) => {
                self.preamble = true
            }
            (HttpMode::H3, ConnEvent::StreamData { stream, .. }) => {
                if self.active.get(&stream) == Some(&root) {
                    self.rs.get_or_insert(ctx.now);
                }
            }
            (HttpMode::H3, ConnEvent::MessageComplete { stream, tag }) => {
                if let Some(obj) = self.active.remove(&stream) {
                    debug_assert_eq!(u64::from(obj), tag);
                    self.complete(ctx.now, obj);
                }
            }
            (HttpMode::H1, ConnEvent::HandshakeComplete) => {
                if let Some(c) = self.conns.iter_mut().find(|c| c.endpoint == endpoint) {
                    c.ready = true;
                }
            }
            (HttpMode::H1, ConnEvent::StreamData { .. }) => {
                let c = self.conns.iter().find(|c| c.endpoint == endpoint);
                if c.is_some_and(|c| c.busy == Some(root)) {
                    self.rs.get_or_insert(ctx.now);
                }
            }
            (HttpMode::H1, ConnEvent::MessageComplete { tag, .. }) => {
                let mut done = None;
                if let Some(c) = self.conns.iter_mut().find(|c| c.endpoint == endpoint) {
                    if c.busy.is_some_and(|o| u64::from(o) == tag) {
                        done = c.busy.take();
                    }
                }
                if let Some(obj) = done {
                    self.complete(ctx.now, obj);
                }
            }
            _ => {}
        }
        self.pump(ctx)
    }
}

/// Serves manifest objects: each request message's tag names the object.
pub struct WebServer {
    sizes: BTreeMap<u64, u64>,
    fin: bool,
}

impl WebServer {
    pub fn new(manifest: &PageManifest, mode: HttpMode) -> Self {
        WebServer {
            sizes: manifest
                .objects()
                .iter()
                .map(|o| (u64::from(o.id), o.size_bytes))
                .collect(),
            // h1 keeps the connection open for the next request
            fin: mode == HttpMode::H3,
        }
    }
}

impl App for WebServer {
    fn on_event(&mut self, ctx: &mut Ctx, endpoint: usize, event: ConnEvent) -> Result<(), RunError> {
        if let ConnEvent::MessageComplete { stream, tag } = event {
            if let Some(&size) = self.sizes.get(&tag) {
                ctx.conn_mut(endpoint)
                    .send_message(stream, size, tag, self.fin)
                    .map_err(|source| RunError::Transport { endpoint, source })?;
            }
        }
        Ok(())
    }
}

/// Loads `manifest` once, giving up after `cap` of simulated time.
pub fn run_web(
    setup: &SimSetup,
    mode: HttpMode,
    profile: TransportProfile,
    manifest: &PageManifest,
    cap: SimTime,
) -> Result<RunOutput, RunFailure> {
    let client = WebClient::new(mode, profile, manifest.clone());
    let server = WebServer::new(manifest, mode);
    let mut sim = start(setup, client, server)?;
    let mut events = 0;
    let mut t = SimTime::ZERO;
    while !sim.world.client.is_done() {
        if t >= cap {
            let msg = format!(
                "{} of {} objects after {}",
                sim.world.client.completed.len(),
                manifest.len(),
                cap
            );
            return Err(failure(&mut sim, "incomplete", msg));
        }
        t += STEP;
        events += match sim.run_until(t) {
            Ok(n) => n,
            Err(e) => return Err(sim_failure(&mut sim, e)),
        };
    }
    let client = std::mem::replace(
        &mut sim.world.client,
        WebClient::new(mode, profile, PageManifest::single(1)),
    );
    Ok(finish(&mut sim, RunResult::Web(client.into_result()), events))
}
