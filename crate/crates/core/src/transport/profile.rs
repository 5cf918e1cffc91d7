use std::fmt;

use serde::{Deserialize, Serialize};

use super::TransportError;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Quic,
    Tcp,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Quic => "quic",
            Kind::Tcp => "tcp",
        })
    }
}

/// Receiver acknowledgement policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AckFrequency {
    /// Ack-eliciting packets received before an immediate ACK.
    pub threshold: u32,
    pub max_ack_delay_ms: u64,
}

impl Default for AckFrequency {
    fn default() -> Self {
        AckFrequency {
            threshold: 2,
            max_ack_delay_ms: 25,
        }
    }
}

impl AckFrequency {
    pub fn max_ack_delay(&self) -> SimTime {
        SimTime::from_millis(self.max_ack_delay_ms)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransportProfile {
    pub kind: Kind,
    /// Extra round trips a TCP-like connection spends on TLS before the
    /// client may send. Always zero for QUIC.
    pub tls_rtts: u8,
    pub max_payload_bytes: u32,
    pub ack_frequency: AckFrequency,
}

impl TransportProfile {
    pub fn quic() -> Self {
        TransportProfile {
            kind: Kind::Quic,
            tls_rtts: 0,
            max_payload_bytes: 1200,
            ack_frequency: AckFrequency::default(),
        }
    }

    pub fn tcp(tls_rtts: u8) -> Self {
        TransportProfile {
            kind: Kind::Tcp,
            tls_rtts,
            max_payload_bytes: 1200,
            ack_frequency: AckFrequency::default(),
        }
    }

    pub fn with_ack_frequency(mut self, ack_frequency: AckFrequency) -> Self {
        self.ack_frequency = ack_frequency;
        self
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.kind == Kind::Quic && self.tls_rtts != 0 {
            return Err(TransportError::InvalidProfile(
                "tls_rtts must be 0 for quic".into(),
            ));
        }
        if self.tls_rtts > 2 {
            return Err(TransportError::InvalidProfile(format!(
                "tls_rtts {} outside 0..=2",
                self.tls_rtts
            )));
        }
        if self.max_payload_bytes < 256 {
            return Err(TransportError::InvalidProfile(format!(
                "max_payload_bytes {} below 256",
                self.max_payload_bytes
            )));
        }
        if self.ack_frequency.threshold == 0 {
            return Err(TransportError::InvalidProfile(
                "ack threshold must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Handshake round trips before the client may send application data.
    pub fn handshake_rounds(&self) -> u8 {
        1 + self.tls_rtts
    }
}
