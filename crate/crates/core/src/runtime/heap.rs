use super::RuntimeError;

/// Heap occupancy of one node. `live_bytes` is the survivor set a
/// collection leaves behind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapModel {
    pub live_bytes: u64,
    pub allocated_bytes: u64,
    pub trigger_bytes: u64,
    pub hard_limit_bytes: u64,
    pub low_water_bytes: u64,
}

impl HeapModel {
    pub fn new(
        live_bytes: u64,
        trigger_bytes: u64,
        hard_limit_bytes: u64,
        low_water_bytes: u64,
    ) -> Result<Self, RuntimeError> {
        if trigger_bytes <= live_bytes {
            return Err(RuntimeError::TriggerBelowLive {
                trigger: trigger_bytes,
                live: live_bytes,
            });
        }
        if trigger_bytes.saturating_add(low_water_bytes) > hard_limit_bytes {
            return Err(RuntimeError::NoDeferralHeadroom {
                trigger: trigger_bytes,
                low_water: low_water_bytes,
                hard_limit: hard_limit_bytes,
            });
        }
        Ok(HeapModel {
            live_bytes,
            allocated_bytes: live_bytes,
            trigger_bytes,
            hard_limit_bytes,
            low_water_bytes,
        })
    }

    /// Trigger at twice the live set, hard limit as given, low-water at 20%
    /// of the hard limit.
    pub fn with_defaults(live_bytes: u64, hard_limit_bytes: u64) -> Result<Self, RuntimeError> {
        HeapModel::new(
            live_bytes,
            2 * live_bytes,
            hard_limit_bytes,
            hard_limit_bytes / 5,
        )
    }

    pub fn headroom(&self) -> u64 {
        self.hard_limit_bytes.saturating_sub(self.allocated_bytes)
    }
}
