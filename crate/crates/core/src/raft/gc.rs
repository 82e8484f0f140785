use std::collections::{BTreeMap, VecDeque};

use crate::sim::NodeId;

/// Majority of `n` servers.
pub fn quorum(n: u32) -> u32 {
    n / 2 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerDecision {
    /// Send a grant to the requester.
    Grant,
    /// The leader itself may collect once it has handed leadership over.
    Switch,
    Enqueued,
    /// The requester already holds a grant for this ticket; resend it.
    AlreadyGranted,
    AlreadyPending,
}

/// Leader-side bookkeeping of which servers are collecting with its
/// permission. A grant is only handed out while the servers left running
/// still form a quorum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcLedger {
    cluster_size: u32,
    granted: BTreeMap<NodeId, u64>,
    pending: VecDeque<(NodeId, u64)>,
    last_gc: Option<NodeId>,
}

impl GcLedger {
    pub fn new(cluster_size: u32) -> Self {
        GcLedger {
            cluster_size,
            granted: BTreeMap::new(),
            pending: VecDeque::new(),
            last_gc: None,
        }
    }

    pub fn cluster_size(&self) -> u32 {
        self.cluster_size
    }

    /// Servers that may collect at once.
    pub fn capacity(&self) -> u32 {
        self.cluster_size - quorum(self.cluster_size)
    }

    pub fn used(&self) -> u32 {
        self.granted.len() as u32
    }

    pub fn granted(&self) -> &BTreeMap<NodeId, u64> {
        &self.granted
    }

    pub fn pending(&self) -> &VecDeque<(NodeId, u64)> {
        &self.pending
    }

    pub fn last_gc(&self) -> Option<NodeId> {
        self.last_gc
    }

    fn has_room(&self) -> bool {
        self.used() < self.capacity()
    }

    /// `me` is the leader holding this ledger.
    pub fn on_request(&mut self, me: NodeId, from: NodeId, ticket: u64) -> LedgerDecision {
        if let Some(t) = self.granted.get_mut(&from) {
            // A node collects one ticket at a time; a new id means the old
            // grant was used up without a done message reaching us.
            *t = ticket;
            return LedgerDecision::AlreadyGranted;
        }
        if let Some(p) = self.pending.iter_mut().find(|(n, _)| *n == from) {
            p.1 = ticket;
            return LedgerDecision::AlreadyPending;
        }
        if !self.has_room() {
            self.pending.push_back((from, ticket));
            return LedgerDecision::Enqueued;
        }
        self.granted.insert(from, ticket);
        if from == me {
            LedgerDecision::Switch
        } else {
            LedgerDecision::Grant
        }
    }

    /// Handles `doneGC`. Returns the next waiter granted, if any; stale or
    /// unknown notifications change nothing.
    pub fn on_finished(&mut self, from: NodeId, ticket: u64) -> Option<(NodeId, u64)> {
        if self.granted.get(&from) != Some(&ticket) {
            return None;
        }
        self.granted.remove(&from);
        self.last_gc = Some(from);
        self.grant_next()
    }

    /// Gives up on a grant whose holder never reported back.
    pub fn on_timeout(&mut self, from: NodeId, ticket: u64) -> Option<(NodeId, u64)> {
        if self.granted.get(&from) != Some(&ticket) {
            return None;
        }
        self.granted.remove(&from);
        self.grant_next()
    }

    fn grant_next(&mut self) -> Option<(NodeId, u64)> {
        if !self.has_room() {
            return None;
        }
        let (n, t) = self.pending.pop_front()?;
        self.granted.insert(n, t);
        Some((n, t))
    }

    /// Leadership changed: forget every grant and waiter.
    pub fn reset(&mut self) {
        self.granted.clear();
        self.pending.clear();
    }

    /// Takes over grants still being used under the previous leader, up to
    /// capacity.
    pub fn adopt(&mut self, handover: &[(NodeId, u64)], last_gc: Option<NodeId>) {
        for &(n, t) in handover {
            if self.has_room() {
                self.granted.insert(n, t);
            }
        }
        if last_gc.is_some() {
            self.last_gc = last_gc;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowerEvent {
    GcRequest(u64),
    GcAllowed(u64),
    LeaderChange(Option<NodeId>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowerAction {
    Nothing,
    Ask { leader: NodeId, ticket: u64 },
    /// Call `start_gc`, then report `doneGC` for the ticket once the pause
    /// (if any) is over.
    StartGc(u64),
}

/// Server-side half of the protocol: remembers the deferred ticket and
/// asks whoever currently leads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FollowerGcMachine {
    req_in_flight: Option<u64>,
    leader: Option<NodeId>,
}

impl FollowerGcMachine {
    pub fn req_in_flight(&self) -> Option<u64> {
        self.req_in_flight
    }

    pub fn leader(&self) -> Option<NodeId> {
        self.leader
    }

    pub fn handle(&mut self, ev: FollowerEvent) -> FollowerAction {
        match ev {
            FollowerEvent::GcRequest(id) => {
                self.req_in_flight = Some(id);
                match self.leader {
                    Some(leader) => FollowerAction::Ask { leader, ticket: id },
                    None => FollowerAction::Nothing,
                }
            }
            FollowerEvent::GcAllowed(id) => {
                if self.req_in_flight == Some(id) {
                    self.req_in_flight = None;
                }
                FollowerAction::StartGc(id)
            }
            FollowerEvent::LeaderChange(leader) => {
                self.leader = leader;
                match (self.req_in_flight, leader) {
                    (Some(ticket), Some(leader)) => FollowerAction::Ask { leader, ticket },
                    _ => FollowerAction::Nothing,
                }
            }
        }
    }
}
