//! Raft log replication in which servers ask the leader before collecting,
//! and a leader that needs to collect first hands leadership over.

mod checker;
mod cluster;
mod gc;
mod model;

pub use checker::{check_history, Entry, History, SafetyViolation};
pub use cluster::{
    ClientMode, LeaderFaults, PauseKind, PauseRecord, RaftCluster, RaftClusterConfig,
    RaftGcRecord, RaftRunResult,
};
pub use gc::{
    quorum, FollowerAction, FollowerEvent, FollowerGcMachine, GcLedger, LedgerDecision,
};
pub use model::{raft_model_eval, RaftEventModel, RaftModelOutcome, RaftRole};
