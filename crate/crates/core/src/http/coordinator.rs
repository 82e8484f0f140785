use std::collections::{BTreeSet, VecDeque};

use crate::sim::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Grant,
    Enqueued,
    /// Duplicate ask from a node already collecting or waiting.
    Ignored,
}

/// Balancer-side admission control: at most `max_concurrent` backends may
/// be out of rotation for collection at once; the rest wait in FIFO order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinatorState {
    max_concurrent: usize,
    collecting_now: BTreeSet<NodeId>,
    wait_queue: VecDeque<NodeId>,
}

impl CoordinatorState {
    pub fn new(max_concurrent: usize) -> Self {
        CoordinatorState {
            max_concurrent,
            collecting_now: BTreeSet::new(),
            wait_queue: VecDeque::new(),
        }
    }

    pub fn max_concurrent(&self) -> usize {
        self.max_concurrent
    }

    pub fn collecting_now(&self) -> &BTreeSet<NodeId> {
        &self.collecting_now
    }

    pub fn wait_queue(&self) -> &VecDeque<NodeId> {
        &self.wait_queue
    }

    pub fn decide(&mut self, asker: NodeId) -> Decision {
        if self.collecting_now.contains(&asker) || self.wait_queue.contains(&asker) {
            return Decision::Ignored;
        }
        if self.collecting_now.len() < self.max_concurrent {
            self.collecting_now.insert(asker);
            Decision::Grant
        } else {
            self.wait_queue.push_back(asker);
            Decision::Enqueued
        }
    }

    /// Handles `doneGC` from `node`; returns the next backend granted, if any.
    pub fn finish(&mut self, node: NodeId) -> Option<NodeId> {
        if !self.collecting_now.remove(&node) {
            return None;
        }
        if self.collecting_now.len() >= self.max_concurrent {
            return None;
        }
        let next = self.wait_queue.pop_front()?;
        self.collecting_now.insert(next);
        Some(next)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn idle_coordinator_grants_immediately() {
        let mut c = CoordinatorState::new(1);
        assert_eq!(c.decide(NodeId(1)), Decision::Grant);
    }

    #[test]
    fn second_asker_waits_for_done() {
        let mut c = CoordinatorState::new(1);
        c.decide(NodeId(1));
        assert_eq!(c.decide(NodeId(2)), Decision::Enqueued);
        assert_eq!(c.finish(NodeId(1)), Some(NodeId(2)));
        assert!(c.collecting_now().contains(&NodeId(2)));
        assert_eq!(c.finish(NodeId(2)), None);
        assert!(c.collecting_now().is_empty());
    }

    #[test]
    fn simultaneous_asks_are_served_in_arrival_order() {
        let mut c = CoordinatorState::new(1);
        let asks = [NodeId(3), NodeId(1), NodeId(2)];
        let mut granted = Vec::new();
        for a in asks {
            if c.decide(a) == Decision::Grant {
                granted.push(a);
            }
        }
        while let Some(&cur) = granted.last() {
            match c.finish(cur) {
                Some(next) => granted.push(next),
                None => break,
            }
        }
        assert_eq!(granted, asks);
    }

    #[test]
    fn duplicate_ask_is_ignored() {
        let mut c = CoordinatorState::new(1);
        c.decide(NodeId(1));
        c.decide(NodeId(2));
        assert_eq!(c.decide(NodeId(1)), Decision::Ignored);
        assert_eq!(c.decide(NodeId(2)), Decision::Ignored);
        assert_eq!(c.wait_queue().len(), 1);
    }

    #[test]
    fn stray_done_is_harmless() {
        let mut c = CoordinatorState::new(1);
        c.decide(NodeId(1));
        c.decide(NodeId(2));
        assert_eq!(c.finish(NodeId(7)), None);
        assert_eq!(c.collecting_now().len(), 1);
    }

    proptest! {
        #[test]
        fn budget_and_disjointness_hold(max in 1usize..4, ops in prop::collection::vec((any::<bool>(), 0u32..6), 0..200)) {
            let mut c = CoordinatorState::new(max);
            for (ask, n) in ops {
                if ask { c.decide(NodeId(n)); } else { c.finish(NodeId(n)); }
                prop_assert!(c.collecting_now().len() <= max);
                prop_assert!(c.wait_queue().iter().all(|n| !c.collecting_now().contains(n)));
                // Nobody waits while there is spare budget.
                prop_assert!(c.wait_queue().is_empty() || c.collecting_now().len() == max);
            }
        }
    }
}
