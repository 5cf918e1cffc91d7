//! Modeled packet contents. Nothing is encoded; each frame knows the wire size
//! it stands for.

use std::ops::Range;

use crate::time::SimTime;

/// Header and framing overhead added to every data packet.
pub const DATA_OVERHEAD: u32 = 40;
pub const ACK_SIZE: u32 = 60;
pub const CONTROL_SIZE: u32 = 60;
/// QUIC pads client and server handshake flights to a full datagram.
pub const QUIC_HANDSHAKE_SIZE: u32 = 1240;

#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Handshake(HandshakeMsg),
    Data(DataPacket),
    Ack(AckFrame),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandshakeMsg {
    /// Client flight for handshake round `round`.
    ClientHello { round: u8 },
    /// Server answer for `round`; on the last round of an HTTP/3 origin it
    /// carries the control preamble.
    ServerHello { round: u8, preamble: bool },
    /// Client's completing flight after the last server answer.
    ClientFinish,
    /// Server confirmation that it has completed the handshake.
    Done,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamChunk {
    pub stream: u64,
    pub offset: u64,
    pub len: u32,
    pub fin: bool,
    /// Message boundaries `(end_offset, tag)` falling inside this chunk.
    pub marks: Vec<(u64, u64)>,
}

impl StreamChunk {
    pub fn end(&self) -> u64 {
        self.offset + u64::from(self.len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataPacket {
    pub pn: u64,
    /// Empty for a keep-alive probe.
    pub chunks: Vec<StreamChunk>,
}

impl DataPacket {
    pub fn payload_len(&self) -> u32 {
        self.chunks.iter().map(|c| c.len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AckFrame {
    /// Acknowledged packet numbers, ascending.
    pub ranges: Vec<Range<u64>>,
    pub ack_delay: SimTime,
    /// Contiguous bytes received on stream 0 (cumulative ACK of TCP).
    pub cum_offset: u64,
    /// Connection-level receive credit; `None` is unlimited.
    pub max_data: Option<u64>,
}

impl AckFrame {
    pub fn largest(&self) -> Option<u64> {
        self.ranges.last().map(|r| r.end - 1)
    }
}

impl Frame {
    pub fn wire_size(&self, quic: bool) -> u32 {
        match self {
            Frame::Handshake(HandshakeMsg::ClientHello { .. })
            | Frame::Handshake(HandshakeMsg::ServerHello { .. })
                if quic =>
            {
                QUIC_HANDSHAKE_SIZE
            }
            Frame::Handshake(_) => CONTROL_SIZE,
            Frame::Data(d) if d.chunks.is_empty() => CONTROL_SIZE,
            Frame::Data(d) => DATA_OVERHEAD + d.payload_len(),
            Frame::Ack(_) => ACK_SIZE,
        }
    }

    pub fn is_application_data(&self) -> bool {
        matches!(self, Frame::Data(d) if !d.chunks.is_empty())
    }
}
