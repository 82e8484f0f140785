use std::collections::{BTreeMap, HashMap};

use crate::sim::NodeId;

/// One slot of a replicated log. `command` is the client request id of a
/// write; `None` marks the no-op a new leader appends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub term: u64,
    pub command: Option<u64>,
}

/// What a run leaves behind for the safety checker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    /// Every (term, node) pair that took leadership, in order.
    pub leaders: Vec<(u64, NodeId)>,
    /// Per server, the (index, entry) pairs in the order they were applied.
    pub applied: Vec<Vec<(u64, Entry)>>,
    pub final_logs: Vec<Vec<Entry>>,
    /// Entries at or below a server's commit index that it later discarded.
    pub committed_truncations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SafetyViolation {
    TwoLeaders { term: u64, first: NodeId, second: NodeId },
    LogMismatch { a: NodeId, b: NodeId, index: u64 },
    AppliedOutOfOrder { node: NodeId, index: u64 },
    AppliedDiffers { index: u64, a: NodeId, b: NodeId },
    CommittedTruncated { count: u64 },
}

/// Checks election safety, log matching and state-machine safety over a
/// finished run. Independent of the node implementation: it looks only at
/// the recorded history.
pub fn check_history(h: &History) -> Vec<SafetyViolation> {
    let mut out = Vec::new();

    let mut by_term: HashMap<u64, NodeId> = HashMap::new();
    for &(term, node) in &h.leaders {
        match by_term.get(&term) {
            Some(&first) if first != node => out.push(SafetyViolation::TwoLeaders {
                term,
                first,
                second: node,
            }),
            Some(_) => {}
            None => {
                by_term.insert(term, node);
            }
        }
    }

    // Two logs agree on everything before the first index where they
    // differ; past it, no index may carry the same term in both.
    for a in 0..h.final_logs.len() {
        for b in a + 1..h.final_logs.len() {
            let (la, lb) = (&h.final_logs[a], &h.final_logs[b]);
            let common = la.len().min(lb.len());
            let first_diff = (0..common).find(|&i| la[i] != lb[i]).unwrap_or(common);
            if let Some(i) = (first_diff..common).find(|&i| la[i].term == lb[i].term) {
                out.push(SafetyViolation::LogMismatch {
                    a: NodeId(a as u32),
                    b: NodeId(b as u32),
                    index: i as u64 + 1,
                });
            }
        }
    }

    let mut chosen: BTreeMap<u64, (NodeId, Entry)> = BTreeMap::new();
    for (n, applied) in h.applied.iter().enumerate() {
        let node = NodeId(n as u32);
        for (k, &(index, entry)) in applied.iter().enumerate() {
            if index != k as u64 + 1 {
                out.push(SafetyViolation::AppliedOutOfOrder { node, index });
                break;
            }
            match chosen.get(&index) {
                Some(&(first, e)) if e != entry => {
                    out.push(SafetyViolation::AppliedDiffers {
                        index,
                        a: first,
                        b: node,
                    });
                }
                Some(_) => {}
                None => {
                    chosen.insert(index, (node, entry));
                }
            }
        }
    }

    if h.committed_truncations > 0 {
        out.push(SafetyViolation::CommittedTruncated {
            count: h.committed_truncations,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(term: u64, c: u64) -> Entry {
        Entry {
            term,
            command: Some(c),
        }
    }

    fn applied(log: &[Entry]) -> Vec<(u64, Entry)> {
        log.iter().enumerate().map(|(i, &x)| (i as u64 + 1, x)).collect()
    }

    #[test]
    fn clean_history() {
        let log = vec![e(1, 1), e(1, 2), e(2, 3)];
        let h = History {
            leaders: vec![(1, NodeId(0)), (2, NodeId(1))],
            applied: vec![applied(&log), applied(&log[..2])],
            final_logs: vec![log.clone(), log[..2].to_vec()],
            committed_truncations: 0,
        };
        assert!(check_history(&h).is_empty());
    }

    #[test]
    fn two_leaders_in_one_term() {
        let h = History {
            leaders: vec![(3, NodeId(0)), (3, NodeId(2))],
            ..Default::default()
        };
        assert_eq!(
            check_history(&h),
            [SafetyViolation::TwoLeaders {
                term: 3,
                first: NodeId(0),
                second: NodeId(2)
            }]
        );
    }

    #[test]
    fn diverging_suffix_is_fine_if_terms_differ() {
        let h = History {
            final_logs: vec![vec![e(1, 1), e(2, 2)], vec![e(1, 1), e(3, 5), e(3, 6)]],
            ..Default::default()
        };
        assert!(check_history(&h).is_empty());
    }

    #[test]
    fn same_term_after_divergence_is_a_mismatch() {
        let h = History {
            final_logs: vec![vec![e(1, 1), e(3, 2)], vec![e(2, 1), e(3, 2)]],
            ..Default::default()
        };
        assert_eq!(
            check_history(&h),
            [SafetyViolation::LogMismatch {
                a: NodeId(0),
                b: NodeId(1),
                index: 2
            }]
        );
    }

    #[test]
    fn same_term_different_command_is_a_mismatch() {
        let h = History {
            final_logs: vec![vec![e(1, 1), e(2, 2)], vec![e(1, 9), e(2, 2)]],
            ..Default::default()
        };
        assert_eq!(
            check_history(&h),
            [SafetyViolation::LogMismatch {
                a: NodeId(0),
                b: NodeId(1),
                index: 1
            }]
        );
    }

    #[test]
    fn different_commands_applied_at_one_index() {
        let h = History {
            applied: vec![vec![(1, e(1, 1))], vec![(1, e(1, 2))]],
            ..Default::default()
        };
        assert_eq!(
            check_history(&h),
            [SafetyViolation::AppliedDiffers {
                index: 1,
                a: NodeId(0),
                b: NodeId(1)
            }]
        );
    }

    #[test]
    fn gaps_in_application_are_flagged() {
        let h = History {
            applied: vec![vec![(1, e(1, 1)), (3, e(1, 3))]],
            ..Default::default()
        };
        assert_eq!(
            check_history(&h),
            [SafetyViolation::AppliedOutOfOrder {
                node: NodeId(0),
                index: 3
            }]
        );
    }
}
