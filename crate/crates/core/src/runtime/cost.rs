use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

use super::GIB;

/// Stop-the-world pause cost: a fixed overhead plus a per-GiB term
/// proportional to the live heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectorCostModel {
    pub pause_per_gb: SimTime,
    pub fixed_overhead: SimTime,
}

impl CollectorCostModel {
    /// 25 ms per GiB of live heap.
    pub const DEFAULT_PAUSE_PER_GB: SimTime = SimTime::from_millis(25);

    pub fn new(pause_per_gb: SimTime, fixed_overhead: SimTime) -> Self {
        CollectorCostModel {
            pause_per_gb,
            fixed_overhead,
        }
    }

    /// Pause for a collection with `live_bytes` surviving, rounded to the
    /// nearest microsecond.
    pub fn pause(&self, live_bytes: u64) -> SimTime {
        let gib = u128::from(GIB);
        let scaled = u128::from(self.pause_per_gb.as_micros()) * u128::from(live_bytes);
        let per_gb = (scaled + gib / 2) / gib;
        self.fixed_overhead + SimTime::from_micros(per_gb as u64)
    }
}

impl Default for CollectorCostModel {
    fn default() -> Self {
        CollectorCostModel::new(Self::DEFAULT_PAUSE_PER_GB, SimTime::ZERO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::MIB;

    #[test]
    fn calibrated_http_pause() {
        // 150 MiB at 25 ms/GiB is 3.662 ms; 8.761 ms of overhead gives 12.423 ms.
        let cost = CollectorCostModel::new(SimTime::from_millis(25), SimTime::from_micros(8_761));
        assert_eq!(cost.pause(150 * MIB), SimTime::from_micros(12_423));
    }

    #[test]
    fn empty_heap_without_overhead_is_free() {
        let cost = CollectorCostModel::new(SimTime::from_millis(25), SimTime::ZERO);
        assert_eq!(cost.pause(0), SimTime::ZERO);
    }

    #[test]
    fn one_gib_costs_the_per_gb_rate() {
        let cost = CollectorCostModel::new(SimTime::from_millis(40), SimTime::from_millis(1));
        assert_eq!(cost.pause(GIB), SimTime::from_millis(41));
        assert_eq!(cost.pause(2 * GIB), SimTime::from_millis(81));
    }
}
