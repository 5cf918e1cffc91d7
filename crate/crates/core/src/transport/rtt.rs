use crate::time::SimTime;

/// Smoothed round-trip estimator with the usual 1/8 and 1/4 gains.
#[derive(Clone, Debug, PartialEq)]
pub struct RttEstimator {
    smoothed: Option<SimTime>,
    var: SimTime,
    min: SimTime,
    latest: SimTime,
    initial: SimTime,
}

impl RttEstimator {
    pub fn new(initial: SimTime) -> Self {
        RttEstimator {
            smoothed: None,
            var: SimTime::from_micros(initial.as_micros() / 2),
            min: SimTime::MAX,
            latest: SimTime::ZERO,
            initial,
        }
    }

    pub fn has_sample(&self) -> bool {
        self.smoothed.is_some()
    }

    pub fn smoothed(&self) -> SimTime {
        self.smoothed.unwrap_or(self.initial)
    }

    pub fn var(&self) -> SimTime {
        self.var
    }

    pub fn min(&self) -> SimTime {
        self.min
    }

    pub fn latest(&self) -> SimTime {
        self.latest
    }

    /// Feeds one sample. `ack_delay` is subtracted when that does not take
    /// the sample below the minimum seen so far.
    pub fn update(&mut self, sample: SimTime, ack_delay: SimTime) {
        self.latest = sample;
        self.min = self.min.min(sample);
        let Some(srtt) = self.smoothed else {
            self.smoothed = Some(sample);
            self.var = SimTime::from_micros(sample.as_micros() / 2);
            return;
        };
        let adjusted = if sample >= self.min + ack_delay {
            sample - ack_delay
        } else {
            sample
        };
        let diff = srtt.as_micros().abs_diff(adjusted.as_micros());
        self.var = SimTime::from_micros((3 * self.var.as_micros() + diff) / 4);
        self.smoothed = Some(SimTime::from_micros(
            (7 * srtt.as_micros() + adjusted.as_micros()) / 8,
        ));
    }
}
