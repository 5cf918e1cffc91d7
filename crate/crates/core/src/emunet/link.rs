use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::{serialization_time, SimTime};

use super::NetError;

/// Which way a link carries traffic relative to the client/server path.
///
/// `Forward` is server→client (the satellite forward band), `Return` is
/// client→server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Return,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Return => "return",
        })
    }
}

/// Piecewise-constant one-way delay: each entry holds from its start time
/// until the next entry starts.
#[derive(Clone, Debug, PartialEq)]
pub struct DelaySchedule {
    entries: Vec<(SimTime, SimTime)>,
}

impl DelaySchedule {
    pub fn constant(delay: SimTime) -> Self {
        DelaySchedule {
            entries: vec![(SimTime::ZERO, delay)],
        }
    }

    /// Builds a schedule from `(start, delay)` pairs. The first entry must
    /// start at zero and start times must strictly increase.
    pub fn new(entries: Vec<(SimTime, SimTime)>) -> Result<Self, NetError> {
        match entries.first() {
            None => return Err(NetError::InvalidSchedule("schedule is empty".into())),
            Some((start, _)) if *start != SimTime::ZERO => {
                return Err(NetError::InvalidSchedule(format!(
                    "first entry starts at {start}, expected 0"
                )))
            }
            _ => {}
        }
        if let Some(w) = entries.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(NetError::InvalidSchedule(format!(
                "start times not strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
        Ok(DelaySchedule { entries })
    }

    /// Delay of the last entry whose start is at or before `t`.
    pub fn delay_at(&self, t: SimTime) -> SimTime {
        let idx = self.entries.partition_point(|(start, _)| *start <= t);
        self.entries[idx.saturating_sub(1)].1
    }

    pub fn max_delay(&self) -> SimTime {
        self.entries.iter().map(|e| e.1).max().unwrap_or_default()
    }

    pub fn entries(&self) -> &[(SimTime, SimTime)] {
        &self.entries
    }
}

/// Static description of one directed link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSpec {
    pub delay: DelaySchedule,
    /// Per-packet drop probability in `[0, 1]`.
    pub loss_prob: f64,
    /// Serialization rate; zero means unlimited.
    pub rate_bps: u64,
    pub queue_capacity_pkts: u32,
    pub direction: Direction,
}

impl LinkSpec {
    /// A zero-delay, lossless, unlimited link.
    pub fn ideal(direction: Direction) -> Self {
        LinkSpec {
            delay: DelaySchedule::constant(SimTime::ZERO),
            loss_prob: 0.0,
            rate_bps: 0,
            queue_capacity_pkts: 64,
            direction,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(NetError::InvalidLink(format!(
                "loss probability {} outside [0, 1]",
                self.loss_prob
            )));
        }
        if self.queue_capacity_pkts == 0 {
            return Err(NetError::InvalidLink("queue capacity must be at least 1".into()));
        }
        Ok(())
    }

    pub fn delay_at(&self, t: SimTime) -> SimTime {
        self.delay.delay_at(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    QueueOverflow,
    RandomLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Delivered(SimTime),
    Dropped(DropReason),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub offered_pkts: u64,
    pub delivered_pkts: u64,
    pub delivered_bytes: u64,
    pub dropped_random: u64,
    pub dropped_overflow: u64,
}

/// Runtime state of a directed link: a drop-tail FIFO in front of a
/// fixed-rate serializer, followed by a propagation delay.
#[derive(Debug)]
pub struct Link {
    spec: LinkSpec,
    busy_until: SimTime,
    // departure times of packets still waiting or being serialized
    backlog: VecDeque<SimTime>,
    last_arrival: SimTime,
    stats: LinkStats,
    deliveries: Option<Vec<(SimTime, u32)>>,
}

impl Link {
    pub fn new(spec: LinkSpec) -> Self {
        Link {
            spec,
            busy_until: SimTime::ZERO,
            backlog: VecDeque::new(),
            last_arrival: SimTime::ZERO,
            stats: LinkStats::default(),
            deliveries: None,
        }
    }

    pub fn spec(&self) -> &LinkSpec {
        &self.spec
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    /// Arrival times and sizes of every delivered packet, if recording was
    /// enabled.
    pub fn deliveries(&self) -> Option<&[(SimTime, u32)]> {
        self.deliveries.as_deref()
    }

    pub(crate) fn record_deliveries(&mut self) {
        self.deliveries.get_or_insert_with(Vec::new);
    }

    pub fn queued_pkts(&self, now: SimTime) -> usize {
        self.backlog.iter().filter(|d| **d > now).count()
    }

    /// Admission decision for one packet. `draw` yields a uniform sample in
    /// `[0, 1)` and is only consulted when the link is lossy.
    pub(crate) fn admit(
        &mut self,
        size_bytes: u32,
        now: SimTime,
        draw: impl FnOnce() -> f64,
    ) -> EnqueueOutcome {
        self.stats.offered_pkts += 1;
        while self.backlog.front().is_some_and(|d| *d <= now) {
            self.backlog.pop_front();
        }
        if self.backlog.len() >= self.spec.queue_capacity_pkts as usize {
            self.stats.dropped_overflow += 1;
            return EnqueueOutcome::Dropped(DropReason::QueueOverflow);
        }
        if self.spec.loss_prob > 0.0 && draw() < self.spec.loss_prob {
            self.stats.dropped_random += 1;
            return EnqueueOutcome::Dropped(DropReason::RandomLoss);
        }
        let start = now.max(self.busy_until);
        let departure = start + serialization_time(size_bytes, self.spec.rate_bps);
        self.busy_until = departure;
        if departure > now {
            self.backlog.push_back(departure);
        }
        // A shrinking delay schedule must not let a packet overtake its
        // predecessor.
        let arrival = (departure + self.spec.delay_at(now)).max(self.last_arrival);
        self.last_arrival = arrival;
        self.stats.delivered_pkts += 1;
        self.stats.delivered_bytes += u64::from(size_bytes);
        if let Some(log) = self.deliveries.as_mut() {
            log.push((arrival, size_bytes));
        }
        EnqueueOutcome::Delivered(arrival)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(pairs: &[(u64, u64)]) -> DelaySchedule {
        DelaySchedule::new(
            pairs
                .iter()
                .map(|&(s, d)| (SimTime::from_secs(s), SimTime::from_millis(d)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn delay_lookup() {
        assert_eq!(sched(&[(0, 250)]).delay_at(SimTime::from_secs(5)), SimTime::from_millis(250));
        let s = sched(&[(0, 16), (10, 20)]);
        assert_eq!(s.delay_at(SimTime::from_secs(12)), SimTime::from_millis(20));
        assert_eq!(s.delay_at(SimTime::from_secs(10)), SimTime::from_millis(20));
        assert_eq!(s.delay_at(SimTime::from_micros(9_999_999)), SimTime::from_millis(16));
    }

    #[test]
    fn schedule_validation() {
        assert!(DelaySchedule::new(vec![]).is_err());
        assert!(DelaySchedule::new(vec![(SimTime::from_secs(1), SimTime::ZERO)]).is_err());
        assert!(DelaySchedule::new(vec![
            (SimTime::ZERO, SimTime::ZERO),
            (SimTime::from_secs(2), SimTime::ZERO),
            (SimTime::from_secs(2), SimTime::ZERO),
        ])
        .is_err());
    }

    #[test]
    fn drop_tail_overflow() {
        let mut link = Link::new(LinkSpec {
            delay: DelaySchedule::constant(SimTime::ZERO),
            loss_prob: 0.0,
            rate_bps: 8_000_000,
            queue_capacity_pkts: 2,
            direction: Direction::Forward,
        });
        let now = SimTime::ZERO;
        assert!(matches!(link.admit(1000, now, || 0.5), EnqueueOutcome::Delivered(_)));
        assert!(matches!(link.admit(1000, now, || 0.5), EnqueueOutcome::Delivered(_)));
        assert_eq!(
            link.admit(1000, now, || 0.5),
            EnqueueOutcome::Dropped(DropReason::QueueOverflow)
        );
        // first packet finished serializing after 1ms, freeing a slot
        assert_eq!(
            link.admit(1000, SimTime::from_millis(1), || 0.5),
            EnqueueOutcome::Delivered(SimTime::from_millis(3))
        );
        assert_eq!(link.stats().dropped_overflow, 1);
    }
}
