//! Sans-IO reliable stream transports in two profiles.
//!
//! A [`Connection`] never touches the network: the owner feeds it received
//! frames and timer expiries and drains frames to send with
//! [`Connection::poll_transmit`]. The QUIC-like profile has a one round trip
//! handshake, multiplexed streams and packet-number loss detection; the
//! TCP-like profile has a single stream, extra TLS round trips and
//! duplicate-ACK fast retransmit with a retransmission timeout.

mod connection;
mod frame;
mod profile;
mod rtt;
mod stream;

use thiserror::Error;

pub use connection::{AckDecision, ConnEvent, ConnStats, Connection, Role, PREAMBLE_STREAM};
pub use frame::{
    AckFrame, DataPacket, Frame, HandshakeMsg, StreamChunk, ACK_SIZE, CONTROL_SIZE, DATA_OVERHEAD,
    QUIC_HANDSHAKE_SIZE,
};
pub use profile::{AckFrequency, Kind, TransportProfile};
pub use rtt::RttEstimator;
pub use stream::{Delivery, RecvStream, SendStream};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("stream {0} is not valid for this connection")]
    UnknownStream(u64),
    #[error("stream {0} was already finished")]
    SendAfterFin(u64),
    #[error("peer acknowledged packet {0}, which was never sent")]
    AckOfUnsentPacket(u64),
    #[error("invalid transport profile: {0}")]
    InvalidProfile(String),
}
