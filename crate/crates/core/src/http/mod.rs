//! Load-balanced HTTP cluster whose backends drain before collecting.

mod cluster;
mod coordinator;
mod model;

pub use cluster::{
    BackendStatus, GcRecord, HttpCluster, HttpClusterConfig, HttpRunResult, RoundRobin,
    ServedInterval, BALANCER,
};
pub use coordinator::{CoordinatorState, Decision};
pub use model::{http_model_eval, HttpEventModel, HttpModelOutcome};
