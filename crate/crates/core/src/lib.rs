//! Deterministic simulation of distributed systems that coordinate their
//! garbage collections with the rest of the cluster.
//!
//! * [`sim`]: discrete-event engine and network model.
//! * [`runtime`]: per-node managed runtime with the collection upcall API.
//! * [`http`]: round-robin balanced HTTP cluster with drain-then-collect.
//! * [`raft`]: Raft with fast leadership transfer and quorum-aware
//!   collection scheduling.
//! * [`metrics`]: workloads, latency statistics and report files.
//! * [`scenario`]: scenario files and the three-way comparison driver.

pub mod http;
pub mod metrics;
pub mod raft;
pub mod runtime;
pub mod scenario;
pub mod sim;

use serde::{Deserialize, Serialize};

/// How a node's collector is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GcMode {
    /// Collect as soon as the trigger is crossed.
    On,
    /// Never collect.
    Off,
    /// Defer long collections and schedule them through the cluster.
    Blade,
}

impl GcMode {
    pub const ALL: [GcMode; 3] = [GcMode::Off, GcMode::Blade, GcMode::On];

    pub fn label(self) -> &'static str {
        match self {
            GcMode::On => "gc-on",
            GcMode::Off => "gc-off",
            GcMode::Blade => "blade",
        }
    }
}

impl std::str::FromStr for GcMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" | "gc-on" => Ok(GcMode::On),
            "off" | "gc-off" => Ok(GcMode::Off),
            "blade" => Ok(GcMode::Blade),
            other => Err(format!("unknown gc mode `{other}` (expected on, off or blade)")),
        }
    }
}
