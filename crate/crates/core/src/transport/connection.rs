use std::collections::{BTreeMap, VecDeque};

use serde_json::json;

use super::frame::{AckFrame, DataPacket, Frame, HandshakeMsg, StreamChunk};
use super::profile::{Kind, TransportProfile};
use super::rtt::RttEstimator;
use super::stream::{RecvStream, SendStream};
use super::TransportError;
use crate::congestion::{CcTuning, CongestionState};
use crate::eventlog::EventLog;
use crate::ranges::RangeSet;
use crate::time::SimTime;

/// Server-initiated unidirectional stream carrying the HTTP/3 control
/// preamble.
pub const PREAMBLE_STREAM: u64 = 3;

const PACKET_THRESHOLD: u64 = 3;
const DUPACK_THRESHOLD: u32 = 3;
const INITIAL_RTT: SimTime = SimTime::from_millis(333);
const HANDSHAKE_TIMEOUT: SimTime = SimTime::from_secs(1);
const CONNECT_TIMEOUT: SimTime = SimTime::from_secs(10);
const MIN_PTO: SimTime = SimTime::from_millis(10);
const MIN_RTO: SimTime = SimTime::from_millis(200);
const MAX_BACKOFF_EXP: u32 = 16;
const MAX_ACK_RANGES: usize = 32;
const PROBE_PACKETS: u32 = 2;
/// Credit growth that triggers an unsolicited window update.
const WINDOW_UPDATE_STEP: u64 = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConnEvent {
    /// Server side: the first client handshake flight arrived.
    Incoming,
    HandshakeComplete,
    /// Client side: the server's control preamble arrived.
    Preamble,
    StreamData { stream: u64, len: u64 },
    MessageComplete { stream: u64, tag: u64 },
    StreamFin { stream: u64 },
    /// Client side: the handshake made no progress for ten seconds.
    ConnectTimeout,
}

/// Receiver acknowledgement decision for one ack-eliciting packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AckDecision {
    AckNow,
    AckDelayed(SimTime),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConnStats {
    pub data_packets_sent: u64,
    pub retransmitted_bytes: u64,
    pub new_bytes_sent: u64,
    pub packets_lost: u64,
    pub acks_sent: u64,
    pub acks_received: u64,
    pub delayed_ack_fires: u64,
    pub ptos: u64,
    pub rtos: u64,
}

#[derive(Clone, Debug)]
struct SentPacket {
    time: SimTime,
    bytes: u64,
    chunks: Vec<StreamChunk>,
    cwnd_limited: bool,
}

#[derive(Debug)]
pub struct Connection {
    id: u32,
    role: Role,
    profile: TransportProfile,
    mss: u64,

    // handshake
    started_at: SimTime,
    established_at: Option<SimTime>,
    confirmed: bool,
    failed: bool,
    hs_out: VecDeque<HandshakeMsg>,
    hs_round: u8,
    hs_sent_at: SimTime,
    hs_retries: u32,
    hs_deadline: Option<SimTime>,
    hs_progress_at: SimTime,
    incoming_seen: bool,
    hs_answered: Option<u8>,
    hs_reply_at: Option<SimTime>,
    hold: bool,
    held: bool,
    preamble_on_hello: bool,

    // sending
    send: BTreeMap<u64, SendStream>,
    rr_cursor: u64,
    next_bidi: u64,
    next_pn: u64,
    sent: BTreeMap<u64, SentPacket>,
    bytes_in_flight: u64,
    peer_max_data: u64,
    cc: CongestionState,
    rtt: RttEstimator,
    largest_acked: Option<u64>,
    loss_time: Option<SimTime>,
    last_eliciting_sent: SimTime,
    pto_count: u32,
    probes_pending: u32,
    rto_armed_at: SimTime,
    last_cum: u64,
    dupacks: u32,

    // receiving
    recv: BTreeMap<u64, RecvStream>,
    recv_pns: RangeSet,
    largest_recv: Option<u64>,
    largest_recv_time: SimTime,
    unacked_eliciting: u32,
    ack_deadline: Option<SimTime>,
    ack_now: bool,
    local_max_data: Option<u64>,
    advertised_max_data: Option<u64>,
    recv_total: u64,

    events: VecDeque<ConnEvent>,
    stats: ConnStats,
}

impl Connection {
    fn new(id: u32, role: Role, profile: TransportProfile, tuning: CcTuning) -> Self {
        Connection {
            id,
            role,
            profile,
            mss: u64::from(profile.max_payload_bytes),
            started_at: SimTime::ZERO,
            established_at: None,
            confirmed: false,
            failed: false,
            hs_out: VecDeque::new(),
            hs_round: 0,
            hs_sent_at: SimTime::ZERO,
            hs_retries: 0,
            hs_deadline: None,
            hs_progress_at: SimTime::ZERO,
            incoming_seen: false,
            hs_answered: None,
            hs_reply_at: None,
            hold: false,
            held: false,
            preamble_on_hello: false,
            send: BTreeMap::new(),
            rr_cursor: 0,
            next_bidi: 0,
            next_pn: 0,
            sent: BTreeMap::new(),
            bytes_in_flight: 0,
            peer_max_data: u64::MAX,
            cc: CongestionState::new(tuning, profile.max_payload_bytes),
            rtt: RttEstimator::new(INITIAL_RTT),
            largest_acked: None,
            loss_time: None,
            last_eliciting_sent: SimTime::ZERO,
            pto_count: 0,
            probes_pending: 0,
            rto_armed_at: SimTime::ZERO,
            last_cum: 0,
            dupacks: 0,
            recv: BTreeMap::new(),
            recv_pns: RangeSet::new(),
            largest_recv: None,
            largest_recv_time: SimTime::ZERO,
            unacked_eliciting: 0,
            ack_deadline: None,
            ack_now: false,
            local_max_data: None,
            advertised_max_data: None,
            recv_total: 0,
            events: VecDeque::new(),
            stats: ConnStats::default(),
        }
    }

    /// Starts a client connection; its first handshake flight is ready to
    /// transmit immediately.
    pub fn client(id: u32, profile: TransportProfile, tuning: CcTuning, now: SimTime) -> Self {
        let mut c = Self::new(id, Role::Client, profile, tuning);
        c.started_at = now;
        c.hs_progress_at = now;
        c.send_client_hello(now);
        c
    }

    pub fn server(id: u32, profile: TransportProfile, tuning: CcTuning) -> Self {
        Self::new(id, Role::Server, profile, tuning)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn profile(&self) -> &TransportProfile {
        &self.profile
    }

    pub fn is_quic(&self) -> bool {
        self.profile.kind == Kind::Quic
    }

    pub fn is_established(&self) -> bool {
        self.established_at.is_some()
    }

    pub fn established_at(&self) -> Option<SimTime> {
        self.established_at
    }

    pub fn started_at(&self) -> SimTime {
        self.started_at
    }

    pub fn has_failed(&self) -> bool {
        self.failed
    }

    pub fn congestion(&self) -> &CongestionState {
        &self.cc
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn stats(&self) -> &ConnStats {
        &self.stats
    }

    pub fn poll_event(&mut self) -> Option<ConnEvent> {
        self.events.pop_front()
    }

    /// Server side: withhold the last handshake answer until
    /// [`Connection::release_handshake`].
    pub fn set_hold(&mut self, hold: bool) {
        self.hold = hold;
    }

    /// Server side: attach the control preamble to the last handshake answer.
    pub fn set_preamble_on_handshake(&mut self, on: bool) {
        self.preamble_on_hello = on;
    }

    pub fn release_handshake(&mut self, now: SimTime) {
        self.hold = false;
        if self.held {
            self.held = false;
            self.answer_hello(self.profile.handshake_rounds() - 1, now);
        }
    }

    // ----- streams ---------------------------------------------------------

    /// Next client-initiated bidirectional stream id.
    pub fn open_bidi(&mut self) -> u64 {
        let id = self.next_bidi;
        self.next_bidi += 4;
        id
    }

    fn check_stream(&self, stream: u64) -> Result<(), TransportError> {
        let ok = match (self.profile.kind, self.role) {
            (Kind::Tcp, _) => stream == 0,
            (Kind::Quic, Role::Client) => stream.is_multiple_of(4),
            (Kind::Quic, Role::Server) => {
                stream % 4 == 3 || (stream.is_multiple_of(4) && self.recv.contains_key(&stream))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(TransportError::UnknownStream(stream))
        }
    }

    fn send_stream(&mut self, stream: u64) -> Result<&mut SendStream, TransportError> {
        self.check_stream(stream)?;
        if stream.is_multiple_of(4) && self.role == Role::Client {
            self.next_bidi = self.next_bidi.max(stream + 4);
        }
        let s = self.send.entry(stream).or_default();
        if s.is_finished() {
            return Err(TransportError::SendAfterFin(stream));
        }
        Ok(s)
    }

    /// Appends `len` bytes to `stream`. Data written before the handshake
    /// completes is buffered.
    pub fn send(&mut self, stream: u64, len: u64, fin: bool) -> Result<u64, TransportError> {
        let s = self.send_stream(stream)?;
        s.write(len);
        if fin {
            s.finish();
        }
        Ok(len)
    }

    /// Appends a whole message tagged `tag`.
    pub fn send_message(
        &mut self,
        stream: u64,
        len: u64,
        tag: u64,
        fin: bool,
    ) -> Result<u64, TransportError> {
        let s = self.send_stream(stream)?;
        s.write(len);
        s.mark(tag);
        if fin {
            s.finish();
        }
        Ok(len)
    }

    /// Tags the message ending at the current write offset of `stream`.
    pub fn mark(&mut self, stream: u64, tag: u64) -> Result<(), TransportError> {
        self.send_stream(stream)?.mark(tag);
        Ok(())
    }

    pub fn finish(&mut self, stream: u64) -> Result<(), TransportError> {
        self.send_stream(stream)?.finish();
        Ok(())
    }

    /// Turns `stream` into a source that never runs out of data.
    pub fn send_unbounded(&mut self, stream: u64) -> Result<(), TransportError> {
        self.send_stream(stream)?.set_infinite();
        Ok(())
    }

    /// Bytes written by the application but not yet transmitted.
    pub fn unsent_bytes(&self) -> u64 {
        self.send.values().map(SendStream::unsent).sum()
    }

    pub fn stream_done(&self, stream: u64) -> bool {
        self.send.get(&stream).is_some_and(SendStream::is_done)
    }

    pub fn received_on(&self, stream: u64) -> u64 {
        self.recv.get(&stream).map_or(0, RecvStream::delivered)
    }

    /// Bytes delivered in order to the application across all streams.
    pub fn received_total(&self) -> u64 {
        self.recv_total
    }

    /// Limits the peer to `max` delivered bytes in total.
    pub fn set_max_data(&mut self, max: u64) {
        let grew = match self.advertised_max_data {
            Some(adv) => max >= adv + WINDOW_UPDATE_STEP,
            None => true,
        };
        self.local_max_data = Some(max);
        if grew && self.is_established() {
            self.ack_now = true;
        }
    }

    // ----- handshake -------------------------------------------------------

    fn log(&self, log: &mut EventLog, now: SimTime, event: &str, fields: serde_json::Value) {
        if log.is_enabled() {
            let mut f = fields;
            f["conn"] = json!(self.id);
            log.record(now, "transport", event, f);
        }
    }

    fn send_client_hello(&mut self, now: SimTime) {
        self.hs_out.push_back(HandshakeMsg::ClientHello {
            round: self.hs_round,
        });
        self.hs_sent_at = now;
        self.hs_deadline = Some(now + self.hs_backoff());
    }

    fn hs_backoff(&self) -> SimTime {
        HANDSHAKE_TIMEOUT.saturating_mul(1 << self.hs_retries.min(MAX_BACKOFF_EXP))
    }

    fn answer_hello(&mut self, round: u8, now: SimTime) {
        let last = round + 1 == self.profile.handshake_rounds();
        self.hs_out.push_back(HandshakeMsg::ServerHello {
            round,
            preamble: last && self.preamble_on_hello,
        });
        // Karn: only a first answer yields an RTT sample
        self.hs_reply_at = match self.hs_answered {
            Some(r) if r >= round => None,
            _ => Some(now),
        };
        self.hs_answered = Some(round);
    }

    fn establish(&mut self, now: SimTime, log: &mut EventLog) {
        self.established_at = Some(now);
        self.events.push_back(ConnEvent::HandshakeComplete);
        self.log(
            log,
            now,
            "handshake_complete",
            json!({ "role": format!("{:?}", self.role).to_lowercase(), "elapsed_us": (now - self.started_at).as_micros() }),
        );
    }

    fn on_handshake(&mut self, now: SimTime, msg: HandshakeMsg, log: &mut EventLog) {
        let rounds = self.profile.handshake_rounds();
        match (self.role, msg) {
            (Role::Server, HandshakeMsg::ClientHello { round }) => {
                if !self.incoming_seen {
                    self.incoming_seen = true;
                    self.started_at = now;
                    self.events.push_back(ConnEvent::Incoming);
                }
                if self.is_established() || round >= rounds {
                    return;
                }
                if round + 1 == rounds && self.hold {
                    self.held = true;
                } else {
                    self.answer_hello(round, now);
                }
            }
            (Role::Server, HandshakeMsg::ClientFinish) => self.server_complete(now, log),
            (Role::Client, HandshakeMsg::ServerHello { round, preamble }) => {
                if self.is_established() || round != self.hs_round {
                    return;
                }
                if self.hs_retries == 0 {
                    self.rtt.update(now - self.hs_sent_at, SimTime::ZERO);
                }
                self.hs_progress_at = now;
                self.hs_retries = 0;
                if round + 1 < rounds {
                    self.hs_round += 1;
                    self.send_client_hello(now);
                    return;
                }
                self.establish(now, log);
                if preamble {
                    self.events.push_back(ConnEvent::Preamble);
                }
                self.hs_out.push_back(HandshakeMsg::ClientFinish);
                self.hs_deadline = Some(now + self.hs_backoff());
            }
            (Role::Client, HandshakeMsg::Done) => self.confirm(),
            _ => {}
        }
    }

    fn server_complete(&mut self, now: SimTime, log: &mut EventLog) {
        if self.hs_answered != Some(self.profile.handshake_rounds() - 1) {
            return;
        }
        if !self.is_established() {
            if let Some(t) = self.hs_reply_at {
                self.rtt.update(now - t, SimTime::ZERO);
            }
            self.establish(now, log);
            self.confirmed = true;
        }
        self.hs_out.push_back(HandshakeMsg::Done);
    }

    fn confirm(&mut self) {
        if self.role == Role::Client && self.is_established() {
            self.confirmed = true;
            self.hs_deadline = None;
        }
    }

    // ----- receive path ----------------------------------------------------

    /// Processes one frame from the peer.
    pub fn handle_frame(
        &mut self,
        now: SimTime,
        frame: Frame,
        log: &mut EventLog,
    ) -> Result<(), TransportError> {
        if self.failed {
            return Ok(());
        }
        match frame {
            Frame::Handshake(msg) => {
                self.on_handshake(now, msg, log);
                Ok(())
            }
            Frame::Data(pkt) => {
                if self.role == Role::Server && !self.is_established() {
                    self.server_complete(now, log);
                    if !self.is_established() {
                        return Ok(());
                    }
                }
                self.confirm();
                self.on_data(now, pkt, log);
                Ok(())
            }
            Frame::Ack(ack) => {
                if self.role == Role::Server && !self.is_established() {
                    self.server_complete(now, log);
                }
                self.confirm();
                self.on_ack(now, &ack, log)
            }
        }
    }

    /// Acknowledgement decision for an ack-eliciting packet `pn` whose first
    /// byte on stream 0 is `offset` (TCP) or that arrived out of order.
    pub fn ack_policy(&mut self, now: SimTime, out_of_order: bool) -> AckDecision {
        if out_of_order {
            return AckDecision::AckNow;
        }
        self.unacked_eliciting += 1;
        if self.unacked_eliciting >= self.profile.ack_frequency.threshold {
            return AckDecision::AckNow;
        }
        let deadline = *self
            .ack_deadline
            .get_or_insert(now + self.profile.ack_frequency.max_ack_delay());
        AckDecision::AckDelayed(deadline)
    }

    fn on_data(&mut self, now: SimTime, pkt: DataPacket, log: &mut EventLog) {
        let fresh = self.recv_pns.insert_one(pkt.pn);
        self.recv_pns.retain_highest(MAX_ACK_RANGES * 2);
        let out_of_order = match self.profile.kind {
            Kind::Quic => match self.largest_recv {
                Some(l) => pkt.pn != l + 1,
                None => pkt.pn != 0,
            },
            Kind::Tcp => pkt
                .chunks
                .first()
                .is_some_and(|c| c.offset != self.received_on(c.stream)),
        };
        if self.largest_recv.is_none_or(|l| pkt.pn > l) {
            self.largest_recv = Some(pkt.pn);
            self.largest_recv_time = now;
        }
        self.log(
            log,
            now,
            "packet_received",
            json!({ "pn": pkt.pn, "bytes": pkt.payload_len() }),
        );
        let mut holes = false;
        for chunk in &pkt.chunks {
            let stream = self.recv.entry(chunk.stream).or_default();
            let d = stream.on_chunk(chunk);
            if self.profile.kind == Kind::Tcp && stream.delivered() < chunk.end() {
                holes = true;
            }
            if d.new_bytes > 0 {
                self.recv_total += d.new_bytes;
                self.events.push_back(ConnEvent::StreamData {
                    stream: chunk.stream,
                    len: d.new_bytes,
                });
            }
            for tag in d.completed {
                self.events.push_back(ConnEvent::MessageComplete {
                    stream: chunk.stream,
                    tag,
                });
            }
            if d.fin {
                self.events.push_back(ConnEvent::StreamFin {
                    stream: chunk.stream,
                });
                self.log(log, now, "stream_fin", json!({ "stream": chunk.stream }));
            }
        }
        match self.ack_policy(now, out_of_order || holes || !fresh) {
            AckDecision::AckNow => self.ack_now = true,
            AckDecision::AckDelayed(_) => {}
        }
    }

    fn build_ack(&mut self, now: SimTime) -> AckFrame {
        let skip = self.recv_pns.len().saturating_sub(MAX_ACK_RANGES);
        let ranges = self.recv_pns.iter().skip(skip).collect();
        self.unacked_eliciting = 0;
        self.ack_deadline = None;
        self.ack_now = false;
        self.advertised_max_data = self.local_max_data;
        self.stats.acks_sent += 1;
        AckFrame {
            ranges,
            ack_delay: now.saturating_sub(self.largest_recv_time),
            cum_offset: self.received_on(0),
            max_data: self.local_max_data,
        }
    }

    fn on_ack(&mut self, now: SimTime, ack: &AckFrame, log: &mut EventLog) -> Result<(), TransportError> {
        self.stats.acks_received += 1;
        if let Some(largest) = ack.largest() {
            if largest >= self.next_pn {
                return Err(TransportError::AckOfUnsentPacket(largest));
            }
        }
        if let Some(m) = ack.max_data {
            self.peer_max_data = if self.peer_max_data == u64::MAX {
                m
            } else {
                self.peer_max_data.max(m)
            };
        }
        let mut newly: Vec<(u64, SentPacket)> = Vec::new();
        for r in &ack.ranges {
            let pns: Vec<u64> = self.sent.range(r.clone()).map(|(&pn, _)| pn).collect();
            for pn in pns {
                let pkt = self.sent.remove(&pn).expect("present");
                newly.push((pn, pkt));
            }
        }
        let cum_advanced = ack.cum_offset > self.last_cum;
        self.last_cum = self.last_cum.max(ack.cum_offset);
        if newly.is_empty() {
            return Ok(());
        }
        let largest_newly = newly.iter().map(|(pn, _)| *pn).max().expect("non-empty");
        if Some(largest_newly) == ack.largest() {
            let sent_time = newly.iter().find(|(pn, _)| *pn == largest_newly).expect("present").1.time;
            let ack_delay = if self.is_quic() {
                ack.ack_delay.min(self.profile.ack_frequency.max_ack_delay())
            } else {
                SimTime::ZERO
            };
            self.rtt.update(now - sent_time, ack_delay);
        }
        self.largest_acked = Some(self.largest_acked.map_or(largest_newly, |l| l.max(largest_newly)));

        let cwnd_before = self.cc.cwnd();
        for (pn, pkt) in &newly {
            self.bytes_in_flight -= pkt.bytes;
            for chunk in &pkt.chunks {
                if let Some(s) = self.send.get_mut(&chunk.stream) {
                    s.on_acked(chunk);
                }
            }
            if pkt.cwnd_limited && !self.cc.sent_before_recovery(*pn) {
                self.cc.on_packet_acked(pkt.bytes, now);
            }
        }
        if self.cc.cwnd() != cwnd_before {
            self.log_cwnd(now, log);
        }

        self.pto_count = 0;
        self.rto_armed_at = now;
        if self.profile.kind == Kind::Tcp {
            if cum_advanced {
                self.dupacks = 0;
            } else if !self.sent.is_empty() {
                self.dupacks += 1;
                if self.dupacks == DUPACK_THRESHOLD {
                    let first = *self.sent.keys().next().expect("non-empty");
                    self.declare_lost(now, vec![first], true, log);
                }
            }
        }
        self.detect_losses(now, log);
        Ok(())
    }

    fn log_cwnd(&self, now: SimTime, log: &mut EventLog) {
        if log.is_enabled() {
            let ssthresh = self.cc.ssthresh();
            self.log(
                log,
                now,
                "cwnd_update",
                json!({
                    "cwnd": self.cc.cwnd(),
                    "ssthresh": if ssthresh == u64::MAX { serde_json::Value::Null } else { json!(ssthresh) },
                    "phase": self.cc.phase(),
                }),
            );
        }
    }

    fn loss_delay(&self) -> SimTime {
        let base = self.rtt.smoothed().max(self.rtt.latest());
        base.mul_f64(9.0 / 8.0).max(SimTime::from_millis(1))
    }

    /// Declares packets lost by the packet and (QUIC only) time thresholds.
    pub fn detect_losses(&mut self, now: SimTime, log: &mut EventLog) -> Vec<u64> {
        self.loss_time = None;
        let Some(largest) = self.largest_acked else {
            return Vec::new();
        };
        let delay = self.loss_delay();
        let mut lost = Vec::new();
        for (&pn, pkt) in self.sent.range(..largest) {
            if pn + PACKET_THRESHOLD <= largest {
                lost.push(pn);
            } else if self.is_quic() {
                let at = pkt.time + delay;
                if at <= now {
                    lost.push(pn);
                } else {
                    self.loss_time = Some(self.loss_time.map_or(at, |t| t.min(at)));
                }
            }
        }
        self.declare_lost(now, lost.clone(), true, log);
        lost
    }

    fn declare_lost(&mut self, now: SimTime, pns: Vec<u64>, congestion: bool, log: &mut EventLog) {
        let mut largest_lost = None;
        for pn in pns {
            let Some(pkt) = self.sent.remove(&pn) else {
                continue;
            };
            self.bytes_in_flight -= pkt.bytes;
            self.stats.packets_lost += 1;
            for chunk in &pkt.chunks {
                if let Some(s) = self.send.get_mut(&chunk.stream) {
                    s.on_lost(chunk);
                }
            }
            self.log(log, now, "packet_lost", json!({ "pn": pn, "bytes": pkt.bytes }));
            largest_lost = Some(pn);
        }
        if let Some(pn) = largest_lost {
            if congestion && !self.cc.sent_before_recovery(pn) {
                self.cc.on_congestion_event(now, self.next_pn.saturating_sub(1));
                self.log_cwnd(now, log);
            }
        }
    }

    // ----- timers ----------------------------------------------------------

    fn has_eliciting_in_flight(&self) -> bool {
        !self.sent.is_empty()
    }

    fn pto_duration(&self) -> SimTime {
        let base = (self.rtt.smoothed() + self.rtt.var().saturating_mul(4)).max(MIN_PTO);
        base + self.profile.ack_frequency.max_ack_delay()
    }

    fn rto_duration(&self) -> SimTime {
        (self.rtt.smoothed() + self.rtt.var().saturating_mul(4)).max(MIN_RTO)
    }

    fn recovery_deadline(&self) -> Option<SimTime> {
        if !self.has_eliciting_in_flight() {
            return None;
        }
        let backoff = 1u64 << self.pto_count.min(MAX_BACKOFF_EXP);
        Some(match self.profile.kind {
            Kind::Quic => self.last_eliciting_sent + self.pto_duration().saturating_mul(backoff),
            Kind::Tcp => self.rto_armed_at + self.rto_duration().saturating_mul(backoff),
        })
    }

    /// Earliest time at which [`Connection::on_timeout`] has work to do.
    pub fn next_timeout(&self) -> Option<SimTime> {
        if self.failed {
            return None;
        }
        let hs = if !self.is_established() && self.role == Role::Client {
            self.hs_deadline
                .map(|d| d.min(self.hs_progress_at + CONNECT_TIMEOUT))
        } else if self.role == Role::Client && !self.confirmed {
            self.hs_deadline
        } else {
            None
        };
        [hs, self.ack_deadline, self.loss_time, self.recovery_deadline()]
            .into_iter()
            .flatten()
            .min()
    }

    pub fn on_timeout(&mut self, now: SimTime, log: &mut EventLog) {
        if self.failed {
            return;
        }
        if self.role == Role::Client && !self.is_established() {
            if now >= self.hs_progress_at + CONNECT_TIMEOUT {
                self.failed = true;
                self.hs_out.clear();
                self.events.push_back(ConnEvent::ConnectTimeout);
                self.log(log, now, "connect_timeout", json!({}));
                return;
            }
            if self.hs_deadline.is_some_and(|d| d <= now) {
                self.hs_retries += 1;
                self.send_client_hello(now);
            }
        } else if self.role == Role::Client && !self.confirmed && self.hs_deadline.is_some_and(|d| d <= now) {
            self.hs_retries += 1;
            self.hs_out.push_back(HandshakeMsg::ClientFinish);
            self.hs_deadline = Some(now + self.hs_backoff());
        }
        if self.ack_deadline.is_some_and(|d| d <= now) {
            self.ack_deadline = None;
            self.ack_now = true;
            self.stats.delayed_ack_fires += 1;
        }
        if self.loss_time.is_some_and(|t| t <= now) {
            self.detect_losses(now, log);
            return;
        }
        if self.recovery_deadline().is_some_and(|d| d <= now) {
            match self.profile.kind {
                Kind::Quic => {
                    self.pto_count += 1;
                    self.stats.ptos += 1;
                    if self.pto_count >= 2 {
                        self.cc.on_timeout(now, self.next_pn.saturating_sub(1));
                        self.log_cwnd(now, log);
                    }
                    self.probes_pending = PROBE_PACKETS;
                    // restart the timer from the probe send
                    self.last_eliciting_sent = now;
                }
                Kind::Tcp => {
                    self.stats.rtos += 1;
                    let all: Vec<u64> = self.sent.keys().copied().collect();
                    self.declare_lost(now, all, false, log);
                    self.cc.on_timeout(now, self.next_pn.saturating_sub(1));
                    self.log_cwnd(now, log);
                    self.pto_count += 1;
                    self.rto_armed_at = now;
                }
            }
        }
    }

    // ----- transmit path ---------------------------------------------------

    fn flow_credit(&self) -> u64 {
        self.peer_max_data.saturating_sub(self.stats.new_bytes_sent)
    }

    /// Gathers up to one packet of stream data, retransmissions first,
    /// visiting streams round-robin.
    fn gather(&mut self) -> (Vec<StreamChunk>, u64) {
        let mut room = self.mss;
        let mut chunks = Vec::new();
        let mut retransmitted = 0;
        let ids: Vec<u64> = {
            let after = self.send.range(self.rr_cursor..).map(|(&k, _)| k);
            let before = self.send.range(..self.rr_cursor).map(|(&k, _)| k);
            after.chain(before).collect()
        };
        for &id in &ids {
            if room == 0 {
                break;
            }
            let s = self.send.get_mut(&id).expect("listed");
            while room > 0 && s.has_retransmit() {
                let Some(mut c) = s.next_retransmit(room) else { break };
                c.stream = id;
                room -= u64::from(c.len);
                retransmitted += u64::from(c.len);
                chunks.push(c);
            }
        }
        for &id in &ids {
            let credit = self.flow_credit();
            if room == 0 {
                break;
            }
            let s = self.send.get_mut(&id).expect("listed");
            if !s.has_new() {
                continue;
            }
            let Some(mut c) = s.next_new(room.min(credit)) else { continue };
            c.stream = id;
            room -= u64::from(c.len);
            self.stats.new_bytes_sent += u64::from(c.len);
            self.rr_cursor = id + 1;
            chunks.push(c);
        }
        (chunks, retransmitted)
    }

    fn oldest_in_flight_chunks(&self) -> Vec<StreamChunk> {
        self.sent
            .values()
            .next()
            .map(|p| p.chunks.clone())
            .unwrap_or_default()
    }

    /// Next frame to put on the wire, if any.
    pub fn poll_transmit(&mut self, now: SimTime, log: &mut EventLog) -> Option<Frame> {
        if self.failed {
            return None;
        }
        if let Some(msg) = self.hs_out.pop_front() {
            return Some(Frame::Handshake(msg));
        }
        if self.ack_now {
            let ack = self.build_ack(now);
            self.log(
                log,
                now,
                "ack_sent",
                json!({ "largest": ack.largest(), "ranges": ack.ranges.len() }),
            );
            return Some(Frame::Ack(ack));
        }
        if !self.is_established() {
            return None;
        }
        let probe = self.probes_pending > 0;
        if !probe && self.bytes_in_flight >= self.cc.cwnd() {
            return None;
        }
        let (mut chunks, retransmitted) = self.gather();
        if probe {
            self.probes_pending -= 1;
            if chunks.is_empty() {
                chunks = self.oldest_in_flight_chunks();
            }
        } else if chunks.is_empty() {
            return None;
        }
        let pkt = DataPacket {
            pn: self.next_pn,
            chunks,
        };
        self.next_pn += 1;
        let bytes = u64::from(pkt.payload_len());
        if self.sent.is_empty() {
            self.rto_armed_at = now;
        }
        self.bytes_in_flight += bytes;
        let cwnd = self.cc.cwnd();
        let cwnd_limited = if cwnd < self.cc.ssthresh() {
            2 * self.bytes_in_flight >= cwnd
        } else {
            self.bytes_in_flight + self.mss >= cwnd
        };
        self.sent.insert(
            pkt.pn,
            SentPacket {
                time: now,
                bytes,
                chunks: pkt.chunks.clone(),
                cwnd_limited,
            },
        );
        self.last_eliciting_sent = now;
        self.stats.data_packets_sent += 1;
        self.stats.retransmitted_bytes += retransmitted;
        self.log(
            log,
            now,
            "packet_sent",
            json!({ "pn": pkt.pn, "bytes": bytes, "in_flight": self.bytes_in_flight }),
        );
        Some(Frame::Data(pkt))
    }
}
