//! Deterministic discrete-event engine and network model.

mod engine;
mod network;
mod time;

pub use engine::{Engine, Event, EventHandle, SimStats, TraceRecord};
pub use network::NetworkModel;
pub use time::{NodeId, SimTime};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} which is before the current time {now}")]
    InThePast { at: SimTime, now: SimTime },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}
