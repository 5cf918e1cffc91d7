//! Connection-splitting proxy.
//!
//! Each incoming connection is terminated at the proxy and paired with an
//! onward connection to the next hop. Stream data, message boundaries and
//! fins are copied to the same stream id on the other leg. In the default
//! mode the incoming handshake is answered at once and early data is
//! buffered; in the HTTP/3-capable mode the final answer is withheld until the
//! onward handshake completes and the server's control preamble is passed
//! down the chain.
//!
//! Each leg advertises receive credit equal to what the other leg has already
//! put on the wire plus a relay window, so a fast leg cannot flood the
//! proxy's buffer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::emunet::NodeId;
use crate::sim::{Ctx, RunError};
use crate::transport::{ConnEvent, TransportError, PREAMBLE_STREAM};

pub const DEFAULT_RELAY_WINDOW: u64 = 4 << 20;
pub const DEFAULT_BUFFER_CAP: u64 = 16 << 20;
/// Modeled size of the HTTP/3 control and QPACK stream preamble.
pub const PREAMBLE_BYTES: u64 = 64;
pub const PREAMBLE_TAG: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyMode {
    /// Answer incoming handshakes immediately, connect onward in parallel.
    Default,
    /// Complete the incoming handshake only after the onward one.
    H3Capable,
}

impl fmt::Display for ProxyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProxyMode::Default => "default",
            ProxyMode::H3Capable => "h3_capable",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProxyConfig {
    pub node: NodeId,
    pub mode: ProxyMode,
    pub next_hop: NodeId,
    pub relay_window: u64,
    pub buffer_cap: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Incoming,
    Onward,
}

#[derive(Clone, Debug)]
struct Splice {
    incoming: usize,
    onward: usize,
    /// Last credit advertised on each leg.
    credit_incoming: u64,
    credit_onward: u64,
}

#[derive(Debug)]
pub struct Proxy {
    config: ProxyConfig,
    splices: Vec<Splice>,
    index: BTreeMap<usize, (usize, Side)>,
}

fn transport(endpoint: usize) -> impl FnOnce(TransportError) -> RunError {
    move |source| RunError::Transport { endpoint, source }
}

impl Proxy {
    pub fn new(config: ProxyConfig) -> Self {
        Proxy {
            config,
            splices: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn splice_count(&self) -> usize {
        self.splices.len()
    }

    /// Terminates a new incoming connection and starts the onward one.
    fn accept(&mut self, ctx: &mut Ctx, incoming: usize) {
        let profile = *ctx.conn(incoming).profile();
        let onward = ctx.connect(self.config.node, self.config.next_hop, profile);
        let window = self.config.relay_window;
        ctx.conn_mut(incoming).set_max_data(window);
        ctx.conn_mut(onward).set_max_data(window);
        let idx = self.splices.len();
        self.splices.push(Splice {
            incoming,
            onward,
            credit_incoming: window,
            credit_onward: window,
        });
        self.index.insert(incoming, (idx, Side::Incoming));
        self.index.insert(onward, (idx, Side::Onward));
        ctx.log(
            "pep",
            "incoming_accepted",
            json!({ "node": self.config.node.0, "incoming": incoming, "onward": onward, "mode": self.config.mode }),
        );
    }

    fn check_cap(&self, ctx: &Ctx, endpoint: usize) -> Result<(), RunError> {
        let buffered = ctx.conn(endpoint).unsent_bytes();
        if buffered > self.config.buffer_cap {
            return Err(RunError::ProxyOverload {
                node: self.config.node,
                buffered,
                cap: self.config.buffer_cap,
            });
        }
        Ok(())
    }

    pub fn on_event(&mut self, ctx: &mut Ctx, endpoint: usize, event: ConnEvent) -> Result<(), RunError> {
        if event == ConnEvent::Incoming {
            self.accept(ctx, endpoint);
            return Ok(());
        }
        let Some(&(idx, side)) = self.index.get(&endpoint) else {
            return Ok(());
        };
        let splice = &self.splices[idx];
        let other = match side {
            Side::Incoming => splice.onward,
            Side::Onward => splice.incoming,
        };
        let incoming = splice.incoming;
        match event {
            ConnEvent::HandshakeComplete if side == Side::Onward => {
                ctx.log(
                    "pep",
                    "onward_established",
                    json!({ "node": self.config.node.0, "onward": endpoint }),
                );
                if self.config.mode == ProxyMode::H3Capable {
                    let now = ctx.now;
                    ctx.conn_mut(incoming).release_handshake(now);
                }
            }
            ConnEvent::Preamble => {
                ctx.conn_mut(incoming)
                    .send_message(PREAMBLE_STREAM, PREAMBLE_BYTES, PREAMBLE_TAG, false)
                    .map_err(transport(incoming))?;
                ctx.log("pep", "preamble_relayed", json!({ "node": self.config.node.0 }));
            }
            ConnEvent::StreamData { stream, len } => {
                ctx.conn_mut(other).send(stream, len, false).map_err(transport(other))?;
                self.check_cap(ctx, other)?;
            }
            ConnEvent::MessageComplete { stream, tag } => {
                ctx.conn_mut(other).mark(stream, tag).map_err(transport(other))?;
                if stream == PREAMBLE_STREAM && tag == PREAMBLE_TAG {
                    ctx.log("pep", "preamble_relayed", json!({ "node": self.config.node.0 }));
                }
            }
            ConnEvent::StreamFin { stream } => {
                ctx.conn_mut(other).finish(stream).map_err(transport(other))?;
            }
            ConnEvent::ConnectTimeout => {
                ctx.log(
                    "pep",
                    "splice_closed",
                    json!({ "node": self.config.node.0, "reason": "proxy_error" }),
                );
                return Err(RunError::ProxyError {
                    node: self.config.node,
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Refreshes the receive credit of the leg opposite `endpoint` after it
    /// transmitted.
    pub fn after_transmit(&mut self, ctx: &mut Ctx, endpoint: usize) {
        let Some(&(idx, side)) = self.index.get(&endpoint) else {
            return;
        };
        let window = self.config.relay_window;
        let sent = ctx.conn(endpoint).stats().new_bytes_sent;
        let splice = &mut self.splices[idx];
        let (other, last) = match side {
            Side::Incoming => (splice.onward, &mut splice.credit_onward),
            Side::Onward => (splice.incoming, &mut splice.credit_incoming),
        };
        let credit = sent + window;
        if credit > *last {
            *last = credit;
            ctx.conn_mut(other).set_max_data(credit);
        }
    }
}
