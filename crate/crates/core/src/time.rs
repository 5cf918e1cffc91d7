//! Simulated time in integer microseconds.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// A point in (or span of) simulated time, in microseconds since the start of
/// the simulation.
///
/// Integer ticks keep sub-millisecond serialization delays exact: a 1240 byte
/// packet at 20 Mbit/s occupies the link for 496 µs and must never alias.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e6).round().max(0.0) as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimTime((ms * 1e3).round().max(0.0) as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn mul_f64(self, factor: f64) -> SimTime {
        SimTime((self.0 as f64 * factor).round() as u64)
    }

    pub fn saturating_mul(self, factor: u64) -> SimTime {
        SimTime(self.0.saturating_mul(factor))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        debug_assert!(self.0 >= rhs.0, "negative simulated duration");
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}ms", self.as_millis_f64())
    }
}

/// Time needed to clock `bytes` onto a link of `rate_bps`, rounded up to whole
/// microseconds. A rate of zero means unlimited.
pub fn serialization_time(bytes: u32, rate_bps: u64) -> SimTime {
    if rate_bps == 0 {
        return SimTime::ZERO;
    }
    let bits = u64::from(bytes) * 8 * 1_000_000;
    SimTime(bits.div_ceil(rate_bps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_at_20mbps() {
        assert_eq!(serialization_time(1200, 20_000_000), SimTime::from_micros(480));
        assert_eq!(serialization_time(1200, 0), SimTime::ZERO);
        // rounds up rather than truncating to zero
        assert_eq!(serialization_time(1, 1_000_000_000), SimTime::from_micros(1));
    }

    #[test]
    fn conversions() {
        assert_eq!(SimTime::from_millis(250).as_micros(), 250_000);
        assert_eq!(SimTime::from_secs_f64(4.2171633), SimTime::from_micros(4_217_163));
        assert_eq!(SimTime::from_millis(5).saturating_sub(SimTime::from_millis(9)), SimTime::ZERO);
    }
}
