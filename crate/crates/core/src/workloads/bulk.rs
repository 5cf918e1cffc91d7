use std::collections::BTreeSet;

use crate::emunet::NodeId;
use crate::sim::{App, Ctx, RunError, SimSetup};
use crate::time::SimTime;
use crate::transport::{ConnEvent, Role, TransportProfile};

use super::{
    finish, sim_failure, start, BulkResult, CwndSample, GoodputSample, RunFailure, RunOutput,
    RunResult, REQUEST_BYTES, SAMPLE_INTERVAL,
};

const SAMPLE_TIMER: u32 = 0;
const REQUEST_TAG: u64 = 0;

/// Downloads an endless response and samples goodput and the forward
/// bottleneck sender's window every 100 ms.
pub struct BulkClient {
    profile: TransportProfile,
    duration: SimTime,
    conn: Option<usize>,
    established: Option<SimTime>,
    first_byte: Option<SimTime>,
    last_bytes: u64,
    goodput: Vec<GoodputSample>,
    cwnd: Vec<CwndSample>,
    fallback_cwnd: u64,
}

impl BulkClient {
    pub fn new(profile: TransportProfile, duration: SimTime, initial_cwnd: u64) -> Self {
        BulkClient {
            profile,
            duration,
            conn: None,
            established: None,
            first_byte: None,
            last_bytes: 0,
            goodput: Vec::new(),
            cwnd: Vec::new(),
            fallback_cwnd: initial_cwnd,
        }
    }

    /// The endpoint whose window governs the forward satellite link: the
    /// origin server without proxies, else the last proxy's incoming leg.
    fn bottleneck_sender(&self, ctx: &Ctx) -> Option<usize> {
        let conn = self.conn?;
        let server = ctx.server_node();
        let gateway = NodeId(server.0 - 1);
        if ctx.is_proxy(gateway) {
            ctx.core
                .endpoints()
                .iter()
                .position(|ep| ep.node == gateway && ep.conn.role() == Role::Server)
        } else {
            Some(ctx.core.endpoint(conn).peer)
        }
    }

    fn into_result(self) -> BulkResult {
        BulkResult {
            establishment_ms: self.established.map_or(f64::NAN, |t| t.as_millis_f64()),
            ttfb_ms: self.first_byte.map(|t| t.as_millis_f64()),
            total_bytes: self.last_bytes,
            goodput: self.goodput,
            cwnd: self.cwnd,
        }
    }
}

impl App for BulkClient {
    fn start(&mut self, ctx: &mut Ctx) -> Result<(), RunError> {
        let to = ctx.first_hop();
        self.conn = Some(ctx.connect(NodeId::CLIENT, to, self.profile));
        ctx.schedule(SAMPLE_INTERVAL, SAMPLE_TIMER);
        Ok(())
    }

    fn on_event(&mut self, ctx: &mut Ctx, endpoint: usize, event: ConnEvent) -> Result<(), RunError> {
        match event {
            ConnEvent::HandshakeComplete => {
                self.established = Some(ctx.now);
                ctx.conn_mut(endpoint)
                    .send_message(0, REQUEST_BYTES, REQUEST_TAG, false)
                    .map_err(|source| RunError::Transport { endpoint, source })?;
            }
            ConnEvent::StreamData { stream: 0, .. } => {
                self.first_byte.get_or_insert(ctx.now);
            }
            ConnEvent::ConnectTimeout => return Err(RunError::ConnectTimeout),
            _ => {}
        }
        Ok(())
    }

    fn on_timer(&mut self, ctx: &mut Ctx, _key: u32) -> Result<(), RunError> {
        let t_ms = ctx.now.as_micros() / 1000;
        let bytes = self.conn.map_or(0, |c| ctx.conn(c).received_on(0));
        self.goodput.push(GoodputSample {
            t_ms,
            interval_bytes: bytes - self.last_bytes,
            cum_bytes: bytes,
        });
        self.last_bytes = bytes;
        let sample = match self.bottleneck_sender(ctx) {
            Some(e) => {
                let cc = ctx.conn(e).congestion();
                CwndSample {
                    t_ms,
                    cwnd_bytes: cc.cwnd(),
                    ssthresh_bytes: (cc.ssthresh() != u64::MAX).then_some(cc.ssthresh()),
                }
            }
            None => CwndSample {
                t_ms,
                cwnd_bytes: self.fallback_cwnd,
                ssthresh_bytes: None,
            },
        };
        self.cwnd.push(sample);
        if ctx.now + SAMPLE_INTERVAL <= self.duration {
            ctx.schedule(ctx.now + SAMPLE_INTERVAL, SAMPLE_TIMER);
        }
        Ok(())
    }
}

/// Answers each connection's first request with an endless response.
#[derive(Default)]
pub struct BulkServer {
    serving: BTreeSet<(usize, u64)>,
}

impl App for BulkServer {
    fn on_event(&mut self, ctx: &mut Ctx, endpoint: usize, event: ConnEvent) -> Result<(), RunError> {
        if let ConnEvent::MessageComplete { stream, .. } = event {
            if self.serving.insert((endpoint, stream)) {
                ctx.conn_mut(endpoint)
                    .send_unbounded(stream)
                    .map_err(|source| RunError::Transport { endpoint, source })?;
            }
        }
        Ok(())
    }
}

/// Runs one bulk download of `duration` over the given setup.
pub fn run_bulk(
    setup: &SimSetup,
    profile: TransportProfile,
    duration: SimTime,
) -> Result<RunOutput, RunFailure> {
    let iw_bytes = u64::from(setup.pep.map_or(setup.endpoint_tuning, |p| p.sat).iw)
        * u64::from(profile.max_payload_bytes);
    let client = BulkClient::new(profile, duration, iw_bytes);
    let mut sim = start(setup, client, BulkServer::default())?;
    let events = match sim.run_until(duration) {
        Ok(n) => n,
        Err(e) => return Err(sim_failure(&mut sim, e)),
    };
    let client = std::mem::replace(&mut sim.world.client, BulkClient::new(profile, duration, 0));
    let result = client.into_result();
    Ok(finish(&mut sim, RunResult::Bulk(result), events))
}
