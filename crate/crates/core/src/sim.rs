//! Glue between the network core, transport endpoints, proxies and the
//! workload applications of one run.

use serde_json::{json, Value};
use thiserror::Error;

use crate::congestion::CcTuning;
use crate::emunet::{EmuNet, HandlerError, LinkId, NetError, NetHandler, NodeId, Packet, Topology};
use crate::eventlog::EventLog;
use crate::pep::{Proxy, ProxyConfig, ProxyMode};
use crate::time::SimTime;
use crate::transport::{AckFrequency, ConnEvent, Connection, Frame, TransportError, TransportProfile};

const MAX_DATAGRAM: u32 = 1500;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("transport error on endpoint {endpoint}: {source}")]
    Transport {
        endpoint: usize,
        #[source]
        source: TransportError,
    },
    #[error("connection to the server timed out")]
    ConnectTimeout,
    #[error("proxy at {node} could not reach its next hop")]
    ProxyError { node: NodeId },
    #[error("proxy at {node} buffered {buffered} bytes, above the {cap} byte cap")]
    ProxyOverload { node: NodeId, buffered: u64, cap: u64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("workload incomplete: {0}")]
    Incomplete(String),
}

impl RunError {
    /// Short machine-readable status label.
    pub fn status(&self) -> &'static str {
        match self {
            RunError::Transport { .. } => "transport_error",
            RunError::ConnectTimeout => "connect_timeout",
            RunError::ProxyError { .. } => "proxy_error",
            RunError::ProxyOverload { .. } => "proxy_overload",
            RunError::Net(_) => "network_error",
            RunError::Incomplete(_) => "incomplete",
        }
    }
}

/// Simulation failure with the event that triggered it.
pub type SimFailure = HandlerError<RunError>;

#[derive(Clone, Debug)]
pub struct Datagram {
    pub to: usize,
    pub frame: Frame,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerKey {
    Endpoint(usize),
    App(u32),
}

/// Which component reacts to an endpoint's events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Owner {
    Client,
    Server,
    Proxy(usize),
}

/// Proxy chain settings shared by every proxy of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PepPlan {
    pub mode: ProxyMode,
    /// Tuning for connections between two proxies.
    pub sat: CcTuning,
    /// Tuning for a proxy's endpoint on the client-facing leg.
    pub lan: CcTuning,
    /// Tuning for a proxy's endpoint on the server-facing leg.
    pub net: CcTuning,
    pub relay_window: u64,
    pub buffer_cap: u64,
}

#[derive(Clone, Debug)]
pub struct SimSetup {
    pub topology: Topology,
    pub endpoint_tuning: CcTuning,
    pub pep: Option<PepPlan>,
    pub ack_frequency: AckFrequency,
    /// Origin servers attach the HTTP/3 control preamble to their handshake.
    pub origin_preamble: bool,
    pub seed: u64,
    pub event_log: bool,
    pub record_deliveries: bool,
}

pub struct Endpoint {
    pub node: NodeId,
    pub peer: usize,
    pub owner: Owner,
    pub conn: Connection,
    timer_at: Option<SimTime>,
}

/// Endpoint table and per-run settings, lent to applications through
/// [`Ctx`].
pub struct Core {
    endpoints: Vec<Endpoint>,
    dirty: Vec<usize>,
    app_timers: Vec<(SimTime, u32)>,
    last_node: NodeId,
    endpoint_tuning: CcTuning,
    pep: Option<PepPlan>,
    ack_frequency: AckFrequency,
    origin_preamble: bool,
}

impl Core {
    fn is_proxy(&self, node: NodeId) -> bool {
        self.pep.is_some() && node != NodeId(0) && node != self.last_node
    }

    fn tuning_for(&self, node: NodeId, peer: NodeId) -> CcTuning {
        match self.pep {
            Some(p) if self.is_proxy(node) => {
                if self.is_proxy(peer) {
                    p.sat
                } else if peer < node {
                    p.lan
                } else {
                    p.net
                }
            }
            _ => self.endpoint_tuning,
        }
    }

    fn owner_of(&self, node: NodeId) -> Owner {
        if self.is_proxy(node) {
            Owner::Proxy(node.index() - 1)
        } else if node == self.last_node {
            Owner::Server
        } else {
            Owner::Client
        }
    }

    pub fn endpoint(&self, e: usize) -> &Endpoint {
        &self.endpoints[e]
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }
}

pub struct Ctx<'a> {
    pub now: SimTime,
    pub core: &'a mut Core,
    pub log: &'a mut EventLog,
}

impl Ctx<'_> {
    pub fn conn(&self, e: usize) -> &Connection {
        &self.core.endpoints[e].conn
    }

    /// Mutable access; the endpoint is flushed after the current event.
    pub fn conn_mut(&mut self, e: usize) -> &mut Connection {
        self.core.dirty.push(e);
        &mut self.core.endpoints[e].conn
    }

    pub fn node_of(&self, e: usize) -> NodeId {
        self.core.endpoints[e].node
    }

    pub fn is_proxy(&self, node: NodeId) -> bool {
        self.core.is_proxy(node)
    }

    pub fn server_node(&self) -> NodeId {
        self.core.last_node
    }

    /// Where a client at node 0 connects: the first proxy if the chain is
    /// enabled, else the origin server.
    pub fn first_hop(&self) -> NodeId {
        if self.core.is_proxy(NodeId(1)) {
            NodeId(1)
        } else {
            self.core.last_node
        }
    }

    /// Opens a connection from `from` to the adjacent-or-remote node `to`,
    /// returning the client-side endpoint.
    pub fn connect(&mut self, from: NodeId, to: NodeId, profile: TransportProfile) -> usize {
        let profile = profile.with_ack_frequency(self.core.ack_frequency);
        let c = self.core.endpoints.len();
        let s = c + 1;
        let client = Connection::client(
            c as u32,
            profile,
            self.core.tuning_for(from, to),
            self.now,
        );
        let mut server = Connection::server(s as u32, profile, self.core.tuning_for(to, from));
        let server_owner = self.core.owner_of(to);
        match server_owner {
            Owner::Proxy(_) => {
                if self.core.pep.is_some_and(|p| p.mode == ProxyMode::H3Capable) {
                    server.set_hold(true);
                }
            }
            Owner::Server => server.set_preamble_on_handshake(self.core.origin_preamble),
            Owner::Client => {}
        }
        self.core.endpoints.push(Endpoint {
            node: from,
            peer: s,
            owner: self.core.owner_of(from),
            conn: client,
            timer_at: None,
        });
        self.core.endpoints.push(Endpoint {
            node: to,
            peer: c,
            owner: server_owner,
            conn: server,
            timer_at: None,
        });
        self.core.dirty.push(c);
        self.log(
            "sim",
            "connect",
            json!({ "client": c, "server": s, "from": from.0, "to": to.0 }),
        );
        c
    }

    pub fn schedule(&mut self, at: SimTime, key: u32) {
        self.core.app_timers.push((at, key));
    }

    pub fn log(&mut self, category: &str, event: &str, fields: Value) {
        if self.log.is_enabled() {
            self.log.record(self.now, category, event, fields);
        }
    }
}

/// Reactions of a workload endpoint (client or origin server).
pub trait App {
    fn start(&mut self, _ctx: &mut Ctx) -> Result<(), RunError> {
        Ok(())
    }

    fn on_event(&mut self, ctx: &mut Ctx, endpoint: usize, event: ConnEvent) -> Result<(), RunError>;

    fn on_timer(&mut self, _ctx: &mut Ctx, _key: u32) -> Result<(), RunError> {
        Ok(())
    }
}

pub struct World<C, S> {
    core: Core,
    pub client: C,
    pub server: S,
    proxies: Vec<Proxy>,
}

impl<C: App, S: App> World<C, S> {
    fn dispatch(&mut self, net: &mut EmuNet<Datagram, TimerKey>, e: usize) -> Result<(), RunError> {
        while let Some(ev) = self.core.endpoints[e].conn.poll_event() {
            let owner = self.core.endpoints[e].owner;
            let mut ctx = Ctx {
                now: net.now(),
                core: &mut self.core,
                log: net.log(),
            };
            match owner {
                Owner::Client => self.client.on_event(&mut ctx, e, ev)?,
                Owner::Server => self.server.on_event(&mut ctx, e, ev)?,
                Owner::Proxy(p) => self.proxies[p].on_event(&mut ctx, e, ev)?,
            }
        }
        Ok(())
    }

    fn flush(&mut self, net: &mut EmuNet<Datagram, TimerKey>) -> Result<(), RunError> {
        let now = net.now();
        for (at, key) in self.core.app_timers.drain(..) {
            net.schedule(at, TimerKey::App(key));
        }
        while !self.core.dirty.is_empty() {
            let mut batch = std::mem::take(&mut self.core.dirty);
            batch.sort_unstable();
            batch.dedup();
            for e in batch {
                let (node, peer) = {
                    let ep = &self.core.endpoints[e];
                    (ep.node, ep.peer)
                };
                let peer_node = self.core.endpoints[peer].node;
                let quic = self.core.endpoints[e].conn.is_quic();
                while let Some(frame) = self.core.endpoints[e].conn.poll_transmit(now, net.log()) {
                    let size = frame.wire_size(quic);
                    net.send(node, peer_node, size, Datagram { to: peer, frame })?;
                }
                if let Owner::Proxy(p) = self.core.endpoints[e].owner {
                    let mut ctx = Ctx {
                        now,
                        core: &mut self.core,
                        log: net.log(),
                    };
                    self.proxies[p].after_transmit(&mut ctx, e);
                }
                let ep = &mut self.core.endpoints[e];
                if let Some(t) = ep.conn.next_timeout() {
                    let t = t.max(now);
                    if ep.timer_at.is_none_or(|s| t < s) {
                        ep.timer_at = Some(t);
                        net.schedule(t, TimerKey::Endpoint(e));
                    }
                }
            }
        }
        Ok(())
    }
}

impl<C: App, S: App> NetHandler<Datagram, TimerKey> for World<C, S> {
    type Error = RunError;

    fn on_packet(
        &mut self,
        net: &mut EmuNet<Datagram, TimerKey>,
        packet: Packet<Datagram>,
    ) -> Result<(), RunError> {
        let e = packet.payload.to;
        let now = net.now();
        self.core.endpoints[e]
            .conn
            .handle_frame(now, packet.payload.frame, net.log())
            .map_err(|source| RunError::Transport { endpoint: e, source })?;
        self.core.dirty.push(e);
        self.dispatch(net, e)?;
        self.flush(net)
    }

    fn on_timer(&mut self, net: &mut EmuNet<Datagram, TimerKey>, timer: TimerKey) -> Result<(), RunError> {
        let now = net.now();
        match timer {
            TimerKey::Endpoint(e) => {
                let ep = &mut self.core.endpoints[e];
                if ep.timer_at != Some(now) {
                    return Ok(());
                }
                ep.timer_at = None;
                ep.conn.on_timeout(now, net.log());
                self.core.dirty.push(e);
                self.dispatch(net, e)?;
            }
            TimerKey::App(key) => {
                let mut ctx = Ctx {
                    now,
                    core: &mut self.core,
                    log: net.log(),
                };
                self.client.on_timer(&mut ctx, key)?;
            }
        }
        self.flush(net)
    }
}

/// One fresh simulation instance.
pub struct Simulation<C, S> {
    pub net: EmuNet<Datagram, TimerKey>,
    pub world: World<C, S>,
}

impl<C: App, S: App> Simulation<C, S> {
    pub fn new(setup: &SimSetup, client: C, server: S) -> Self {
        let log = if setup.event_log {
            EventLog::enabled()
        } else {
            EventLog::disabled()
        };
        let mut net = EmuNet::new(&setup.topology, setup.seed, MAX_DATAGRAM).with_log(log);
        if setup.record_deliveries {
            net.record_deliveries();
        }
        let node_count = setup.topology.node_count();
        let last_node = NodeId((node_count - 1) as u8);
        let proxies = match setup.pep {
            Some(plan) => (1..node_count - 1)
                .map(|n| {
                    Proxy::new(ProxyConfig {
                        node: NodeId(n as u8),
                        mode: plan.mode,
                        next_hop: NodeId(n as u8 + 1),
                        relay_window: plan.relay_window,
                        buffer_cap: plan.buffer_cap,
                    })
                })
                .collect(),
            None => Vec::new(),
        };
        let core = Core {
            endpoints: Vec::new(),
            dirty: Vec::new(),
            app_timers: Vec::new(),
            last_node,
            endpoint_tuning: setup.endpoint_tuning,
            pep: setup.pep,
            ack_frequency: setup.ack_frequency,
            origin_preamble: setup.origin_preamble,
        };
        Simulation {
            net,
            world: World {
                core,
                client,
                server,
                proxies,
            },
        }
    }

    /// Lets the applications open connections and arm timers at time zero.
    pub fn start(&mut self) -> Result<(), RunError> {
        let mut ctx = Ctx {
            now: self.net.now(),
            core: &mut self.world.core,
            log: self.net.log(),
        };
        self.world.client.start(&mut ctx)?;
        self.world.server.start(&mut ctx)?;
        self.world.flush(&mut self.net)
    }

    pub fn run_until(&mut self, t_end: SimTime) -> Result<u64, SimFailure> {
        self.net.run_until(t_end, &mut self.world)
    }

    pub fn core(&self) -> &Core {
        &self.world.core
    }

    pub fn server_node(&self) -> NodeId {
        self.world.core.last_node
    }

    pub fn forward_link(&self, hop: usize) -> LinkId {
        LinkId::new(hop, crate::emunet::Direction::Forward)
    }
}
