//! Deterministic discrete-event network core.
//!
//! The network is a chain of nodes joined by hops; every hop has one directed
//! [`Link`] per direction. The standard satellite topology is the four-node
//! chain client ↔ proxy-ST ↔ proxy-GW ↔ server with LAN, SAT and NET hops.
//! Packets addressed to a node further down the chain are forwarded hop by hop
//! with zero processing delay.
//!
//! Events are ordered by `(time, insertion sequence)`, and every random draw
//! comes from one seeded generator in event order, so a run is a pure
//! function of its configuration and seed.

mod link;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

pub use link::{DelaySchedule, Direction, DropReason, EnqueueOutcome, Link, LinkSpec, LinkStats};

use crate::eventlog::EventLog;
use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid delay schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid packet: {0}")]
    InvalidPacket(String),
    #[error("node {0} is not part of the topology")]
    UnknownNode(NodeId),
    #[error("cannot run backwards from {now} to {t_end}")]
    TimeReversal { now: SimTime, t_end: SimTime },
}

/// Failure raised by an event handler, with the event that triggered it.
#[derive(Debug, Error)]
#[error("simulation failed at {at} while handling {event}: {source}")]
pub struct HandlerError<E: std::error::Error + 'static> {
    pub at: SimTime,
    pub event: String,
    #[source]
    pub source: E,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u8);

impl NodeId {
    pub const CLIENT: NodeId = NodeId(0);
    pub const PROXY_ST: NodeId = NodeId(1);
    pub const PROXY_GW: NodeId = NodeId(2);
    pub const SERVER: NodeId = NodeId(3);

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NodeId::CLIENT => f.write_str("client"),
            NodeId::PROXY_ST => f.write_str("proxy_st"),
            NodeId::PROXY_GW => f.write_str("proxy_gw"),
            NodeId::SERVER => f.write_str("server"),
            NodeId(n) => write!(f, "node{n}"),
        }
    }
}

/// Path segments of the standard satellite chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Lan,
    Sat,
    Net,
}

impl Segment {
    pub fn hop(self) -> usize {
        match self {
            Segment::Lan => 0,
            Segment::Sat => 1,
            Segment::Net => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LinkId {
    pub hop: usize,
    pub direction: Direction,
}

impl LinkId {
    pub fn new(hop: usize, direction: Direction) -> Self {
        LinkId { hop, direction }
    }

    /// Node at the receiving end of the link.
    pub fn to_node(self) -> NodeId {
        match self.direction {
            Direction::Forward => NodeId(self.hop as u8),
            Direction::Return => NodeId(self.hop as u8 + 1),
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hop{}-{}", self.hop, self.direction)
    }
}

/// Link specs of one hop, one per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct HopSpec {
    pub forward: LinkSpec,
    pub ret: LinkSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    hops: Vec<HopSpec>,
}

impl Topology {
    pub fn chain(hops: Vec<HopSpec>) -> Result<Self, NetError> {
        if hops.is_empty() {
            return Err(NetError::InvalidLink("a chain needs at least one hop".into()));
        }
        for hop in &hops {
            hop.forward.validate()?;
            hop.ret.validate()?;
        }
        Ok(Topology { hops })
    }

    /// The four-node client/ST/GW/server chain.
    pub fn satellite(lan: HopSpec, sat: HopSpec, net: HopSpec) -> Result<Self, NetError> {
        Self::chain(vec![lan, sat, net])
    }

    pub fn node_count(&self) -> usize {
        self.hops.len() + 1
    }

    pub fn hops(&self) -> &[HopSpec] {
        &self.hops
    }

    /// Sum of one-way delays at time zero along the whole chain, both ways.
    pub fn base_rtt(&self) -> SimTime {
        self.hops.iter().fold(SimTime::ZERO, |acc, h| {
            acc + h.forward.delay_at(SimTime::ZERO) + h.ret.delay_at(SimTime::ZERO)
        })
    }
}

#[derive(Clone, Debug)]
pub struct Packet<P> {
    /// Global sequence number assigned in send order.
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u32,
    pub sent_at: SimTime,
    pub payload: P,
}

enum NetEvent<P, T> {
    Arrival { link: LinkId, packet: Packet<P> },
    Timer(T),
}

struct Scheduled<P, T> {
    at: SimTime,
    seq: u64,
    event: NetEvent<P, T>,
}

impl<P, T> PartialEq for Scheduled<P, T> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl<P, T> Eq for Scheduled<P, T> {}
impl<P, T> PartialOrd for Scheduled<P, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P, T> Ord for Scheduled<P, T> {
    // BinaryHeap is a max-heap; invert so the earliest event pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// Receives packets at their destination node and fired timers.
pub trait NetHandler<P, T> {
    type Error: std::error::Error + 'static;

    fn on_packet(&mut self, net: &mut EmuNet<P, T>, packet: Packet<P>) -> Result<(), Self::Error>;

    fn on_timer(&mut self, net: &mut EmuNet<P, T>, timer: T) -> Result<(), Self::Error>;
}

pub struct EmuNet<P, T> {
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Scheduled<P, T>>,
    // per hop: [forward, return]
    links: Vec<[Link; 2]>,
    rng: ChaCha8Rng,
    next_packet_id: u64,
    max_datagram: u32,
    log: EventLog,
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::Forward => 0,
        Direction::Return => 1,
    }
}

impl<P, T: fmt::Debug> EmuNet<P, T> {
    pub fn new(topology: &Topology, seed: u64, max_datagram: u32) -> Self {
        let links = topology
            .hops
            .iter()
            .map(|h| [Link::new(h.forward.clone()), Link::new(h.ret.clone())])
            .collect();
        EmuNet {
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            links,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_packet_id: 0,
            max_datagram,
            log: EventLog::disabled(),
        }
    }

    pub fn with_log(mut self, log: EventLog) -> Self {
        self.log = log;
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node_count(&self) -> usize {
        self.links.len() + 1
    }

    pub fn log(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn take_log(&mut self) -> EventLog {
        std::mem::take(&mut self.log)
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.hop][dir_index(id.direction)]
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).flat_map(|hop| {
            [Direction::Forward, Direction::Return]
                .into_iter()
                .map(move |d| LinkId::new(hop, d))
        })
    }

    /// Keep a per-packet delivery record on every link.
    pub fn record_deliveries(&mut self) {
        for pair in &mut self.links {
            for link in pair {
                link.record_deliveries();
            }
        }
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, at: SimTime, timer: T) {
        debug_assert!(at >= self.now, "timer scheduled in the past");
        self.push(at.max(self.now), NetEvent::Timer(timer));
    }

    fn push(&mut self, at: SimTime, event: NetEvent<P, T>) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled { at, seq, event });
    }

    fn next_link(&self, at: NodeId, dst: NodeId) -> LinkId {
        if dst > at {
            LinkId::new(at.index(), Direction::Return)
        } else {
            LinkId::new(at.index() - 1, Direction::Forward)
        }
    }

    /// Injects a new packet at `src`. Returns its id and the first hop's
    /// admission outcome.
    pub fn send(
        &mut self,
        src: NodeId,
        dst: NodeId,
        size_bytes: u32,
        payload: P,
    ) -> Result<(u64, EnqueueOutcome), NetError> {
        for node in [src, dst] {
            if node.index() >= self.node_count() {
                return Err(NetError::UnknownNode(node));
            }
        }
        if src == dst {
            return Err(NetError::InvalidPacket("source equals destination".into()));
        }
        if size_bytes == 0 || size_bytes > self.max_datagram {
            return Err(NetError::InvalidPacket(format!(
                "size {size_bytes} outside 1..={}",
                self.max_datagram
            )));
        }
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        let packet = Packet {
            id,
            src,
            dst,
            size_bytes,
            sent_at: self.now,
            payload,
        };
        let link = self.next_link(src, dst);
        let outcome = self.enqueue_packet(link, packet);
        Ok((id, outcome))
    }

    /// Offers `packet` to `link` at the current time, scheduling its arrival
    /// at the far end unless it is dropped.
    pub fn enqueue_packet(&mut self, link: LinkId, packet: Packet<P>) -> EnqueueOutcome {
        let now = self.now;
        let rng = &mut self.rng;
        let outcome = self.links[link.hop][dir_index(link.direction)]
            .admit(packet.size_bytes, now, || rng.random::<f64>());
        match outcome {
            EnqueueOutcome::Delivered(arrival) => {
                self.push(arrival, NetEvent::Arrival { link, packet });
            }
            EnqueueOutcome::Dropped(reason) => {
                if self.log.is_enabled() {
                    self.log.record(
                        now,
                        "net",
                        "packet_dropped",
                        json!({
                            "link": link.to_string(),
                            "packet": packet.id,
                            "reason": reason,
                            "size": packet.size_bytes,
                        }),
                    );
                }
            }
        }
        outcome
    }

    /// Processes every event with time ≤ `t_end` in `(time, sequence)` order
    /// and leaves the clock at `t_end`. Returns the number of events handled.
    pub fn run_until<H: NetHandler<P, T>>(
        &mut self,
        t_end: SimTime,
        handler: &mut H,
    ) -> Result<u64, HandlerError<H::Error>> {
        let mut processed = 0;
        while self.queue.peek().is_some_and(|s| s.at <= t_end) {
            let Scheduled { at, event, .. } = self.queue.pop().expect("peeked");
            self.now = at;
            processed += 1;
            match event {
                NetEvent::Arrival { link, packet } => {
                    let node = link.to_node();
                    if packet.dst == node {
                        let id = packet.id;
                        handler.on_packet(self, packet).map_err(|source| HandlerError {
                            at,
                            event: format!("arrival of packet {id} at {node}"),
                            source,
                        })?;
                    } else {
                        let next = self.next_link(node, packet.dst);
                        self.enqueue_packet(next, packet);
                    }
                }
                NetEvent::Timer(timer) => {
                    let desc = format!("timer {timer:?}");
                    handler.on_timer(self, timer).map_err(|source| HandlerError {
                        at,
                        event: desc,
                        source,
                    })?;
                }
            }
        }
        self.now = self.now.max(t_end);
        Ok(processed)
    }
}
