use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimTime;

/// Point-to-point delay model. Every link has the same one-way delay; an
/// optional jitter adds a uniformly drawn extra delay in `[0, jitter]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub one_way_delay: SimTime,
    pub jitter: Option<SimTime>,
}

impl NetworkModel {
    /// Default round trip used throughout the scenarios: 48 µs.
    pub const DEFAULT_RTT: SimTime = SimTime::from_micros(48);

    pub fn from_rtt(rtt: SimTime) -> Self {
        NetworkModel {
            one_way_delay: rtt.half(),
            jitter: None,
        }
    }

    pub fn with_jitter(mut self, jitter: SimTime) -> Self {
        self.jitter = (jitter > SimTime::ZERO).then_some(jitter);
        self
    }

    pub fn rtt(&self) -> SimTime {
        self.one_way_delay * 2
    }

    /// Worst-case one-way delay, jitter included.
    pub fn max_one_way(&self) -> SimTime {
        self.one_way_delay + self.jitter.unwrap_or(SimTime::ZERO)
    }

    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        match self.jitter {
            None => self.one_way_delay,
            Some(j) => self.one_way_delay + SimTime::from_micros(rng.random_range(0..=j.as_micros())),
        }
    }
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel::from_rtt(Self::DEFAULT_RTT)
    }
}
