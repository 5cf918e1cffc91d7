//! NewReno and Cubic congestion controllers with a configurable initial
//! window.
//!
//! Windows are byte counted. Slow start grows by the acknowledged bytes with
//! no per-ack cap. Recovery bookkeeping is keyed on packet numbers: after a
//! congestion event, acknowledgements of packets sent before it do not grow
//! the window and further losses among them do not reduce it again.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

pub const CUBIC_C: f64 = 0.4;
pub const CUBIC_BETA: f64 = 0.7;
pub const NEWRENO_BETA: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown congestion control algorithm {0:?} (expected newreno or cubic)")]
pub struct UnknownAlgorithm(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    NewReno,
    Cubic,
}

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "newreno" | "reno" => Ok(Algorithm::NewReno),
            "cubic" => Ok(Algorithm::Cubic),
            _ => Err(UnknownAlgorithm(s.to_string())),
        }
    }
}

impl TryFrom<String> for Algorithm {
    type Error = UnknownAlgorithm;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.to_string()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::NewReno => "newreno",
            Algorithm::Cubic => "cubic",
        })
    }
}

/// Algorithm and initial window for one connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcTuning {
    pub cca: Algorithm,
    pub iw: u32,
}

impl CcTuning {
    pub const fn new(cca: Algorithm, iw: u32) -> Self {
        CcTuning { cca, iw }
    }
}

impl Default for CcTuning {
    fn default() -> Self {
        CcTuning::new(Algorithm::Cubic, 10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
}

#[derive(Clone, Debug, PartialEq)]
struct CubicState {
    /// Window before the last reduction, in segments.
    w_max: f64,
    k_secs: f64,
    epoch_start: Option<SimTime>,
    /// Reno-friendly estimate, in bytes.
    w_est: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CongestionState {
    algorithm: Algorithm,
    mss: u64,
    iw_packets: u32,
    cwnd: u64,
    ssthresh: u64,
    bytes_acked: u64,
    cubic: CubicState,
    recovery_until: Option<u64>,
    congestion_events: u64,
}

/// W(t) = C·(t−K)³ + w_max, in segments.
pub fn cubic_window(t_secs: f64, k_secs: f64, w_max: f64) -> f64 {
    CUBIC_C * (t_secs - k_secs).powi(3) + w_max
}

/// K = ∛(w_max·(1−β)/C), in seconds.
pub fn cubic_k(w_max: f64) -> f64 {
    (w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt()
}

impl CongestionState {
    pub fn new(tuning: CcTuning, mss: u32) -> Self {
        assert!(tuning.iw >= 1, "initial window must be at least one packet");
        let mss = u64::from(mss);
        let cwnd = u64::from(tuning.iw) * mss;
        CongestionState {
            algorithm: tuning.cca,
            mss,
            iw_packets: tuning.iw,
            cwnd,
            ssthresh: u64::MAX,
            bytes_acked: 0,
            cubic: CubicState {
                w_max: 0.0,
                k_secs: 0.0,
                epoch_start: None,
                w_est: 0.0,
            },
            recovery_until: None,
            congestion_events: 0,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    /// `u64::MAX` stands for an unset (infinite) threshold.
    pub fn ssthresh(&self) -> u64 {
        self.ssthresh
    }

    pub fn mss(&self) -> u64 {
        self.mss
    }

    pub fn iw_packets(&self) -> u32 {
        self.iw_packets
    }

    pub fn congestion_events(&self) -> u64 {
        self.congestion_events
    }

    pub fn phase(&self) -> Phase {
        if self.cwnd < self.ssthresh {
            Phase::SlowStart
        } else {
            Phase::CongestionAvoidance
        }
    }

    pub fn cubic_w_max(&self) -> f64 {
        self.cubic.w_max
    }

    pub fn cubic_k_secs(&self) -> f64 {
        self.cubic.k_secs
    }

    pub fn cubic_epoch_start(&self) -> Option<SimTime> {
        self.cubic.epoch_start
    }

    /// True if packet `pn` was sent before the current recovery episode
    /// started.
    pub fn sent_before_recovery(&self, pn: u64) -> bool {
        self.recovery_until.is_some_and(|until| pn <= until)
    }

    /// Grows the window for `acked_bytes` newly acknowledged at `now`.
    pub fn on_packet_acked(&mut self, acked_bytes: u64, now: SimTime) -> u64 {
        if self.cwnd < self.ssthresh {
            self.cwnd += acked_bytes;
            return self.cwnd;
        }
        match self.algorithm {
            Algorithm::NewReno => {
                self.bytes_acked += acked_bytes;
                if self.bytes_acked >= self.cwnd {
                    self.bytes_acked -= self.cwnd;
                    self.cwnd += self.mss;
                }
            }
            Algorithm::Cubic => self.cubic_on_ack(acked_bytes, now),
        }
        self.cwnd
    }

    fn cubic_on_ack(&mut self, acked_bytes: u64, now: SimTime) {
        let mss = self.mss as f64;
        let cwnd = self.cwnd as f64;
        let epoch = match self.cubic.epoch_start {
            Some(e) => e,
            None => {
                // Entering avoidance without a fresh reduction: restart the
                // curve from the current window.
                let w = cwnd / mss;
                if w < self.cubic.w_max {
                    self.cubic.k_secs = ((self.cubic.w_max - w) / CUBIC_C).cbrt();
                } else {
                    self.cubic.w_max = w;
                    self.cubic.k_secs = 0.0;
                }
                self.cubic.w_est = cwnd;
                self.cubic.epoch_start = Some(now);
                now
            }
        };
        let t = now.saturating_sub(epoch).as_secs_f64();
        let alpha = 3.0 * (1.0 - CUBIC_BETA) / (1.0 + CUBIC_BETA);
        self.cubic.w_est += alpha * mss * acked_bytes as f64 / cwnd;
        let w_cubic = cubic_window(t, self.cubic.k_secs, self.cubic.w_max) * mss;
        let target = w_cubic.max(self.cubic.w_est).min(1.5 * cwnd).round();
        if target > cwnd {
            self.cwnd = target as u64;
        }
    }

    fn reduce(&mut self, now: SimTime) -> u64 {
        let beta = match self.algorithm {
            Algorithm::NewReno => NEWRENO_BETA,
            Algorithm::Cubic => CUBIC_BETA,
        };
        let floor = 2 * self.mss;
        let reduced = ((self.cwnd as f64 * beta).round() as u64).max(floor);
        if self.algorithm == Algorithm::Cubic {
            self.cubic.w_max = self.cwnd as f64 / self.mss as f64;
            self.cubic.k_secs = cubic_k(self.cubic.w_max);
            self.cubic.epoch_start = Some(now);
            self.cubic.w_est = reduced as f64;
        }
        self.ssthresh = self.ssthresh.min(reduced);
        self.bytes_acked = 0;
        self.congestion_events += 1;
        reduced
    }

    /// Applies one multiplicative decrease and opens a recovery episode that
    /// lasts until a packet numbered above `largest_sent_pn` is acknowledged.
    /// Returns `(cwnd, ssthresh)`.
    pub fn on_congestion_event(&mut self, now: SimTime, largest_sent_pn: u64) -> (u64, u64) {
        self.cwnd = self.reduce(now);
        self.recovery_until = Some(largest_sent_pn);
        (self.cwnd, self.ssthresh)
    }

    /// Retransmission timeout: collapse to two segments and restart slow
    /// start.
    pub fn on_timeout(&mut self, now: SimTime, largest_sent_pn: u64) -> u64 {
        self.reduce(now);
        self.cubic.epoch_start = None;
        self.cwnd = 2 * self.mss;
        self.recovery_until = Some(largest_sent_pn);
        self.cwnd
    }
}
