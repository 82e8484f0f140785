use serde::{Deserialize, Serialize};

use crate::sim::{NodeId, SimTime};

/// One stop-the-world pause on one node, `start <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionInterval {
    pub node: NodeId,
    pub start: SimTime,
    pub end: SimTime,
}

impl CollectionInterval {
    /// Closed-interval intersection.
    pub fn intersects(&self, other: &CollectionInterval) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapStat {
    pub total_collections: usize,
    pub overlapping_collections: usize,
}

impl OverlapStat {
    pub fn fraction(&self) -> f64 {
        if self.total_collections == 0 {
            0.0
        } else {
            self.overlapping_collections as f64 / self.total_collections as f64
        }
    }
}

/// A collection overlaps when it intersects a collection on another node.
pub fn overlap_count(intervals: &[CollectionInterval]) -> OverlapStat {
    debug_assert!(intervals.iter().all(|i| i.start <= i.end));
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by_key(|&i| (intervals[i].start, intervals[i].end));
    let mut overlapping = vec![false; intervals.len()];
    for (pos, &i) in order.iter().enumerate() {
        let a = &intervals[i];
        for &j in &order[pos + 1..] {
            let b = &intervals[j];
            if b.start > a.end {
                break;
            }
            if a.node != b.node {
                overlapping[i] = true;
                overlapping[j] = true;
            }
        }
    }
    OverlapStat {
        total_collections: intervals.len(),
        overlapping_collections: overlapping.iter().filter(|&&o| o).count(),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn iv(node: u32, start: u64, end: u64) -> CollectionInterval {
        CollectionInterval {
            node: NodeId(node),
            start: SimTime::from_micros(start),
            end: SimTime::from_micros(end),
        }
    }

    #[test]
    fn disjoint_intervals_do_not_overlap() {
        let s = overlap_count(&[iv(0, 0, 10), iv(1, 11, 20), iv(2, 21, 30)]);
        assert_eq!(s.overlapping_collections, 0);
        assert_eq!(s.total_collections, 3);
    }

    #[test]
    fn identical_intervals_all_overlap() {
        let s = overlap_count(&[iv(0, 5, 10), iv(1, 5, 10), iv(2, 5, 10)]);
        assert_eq!(s.overlapping_collections, 3);
    }

    #[test]
    fn same_node_does_not_count() {
        let s = overlap_count(&[iv(0, 0, 10), iv(0, 5, 15)]);
        assert_eq!(s.overlapping_collections, 0);
    }

    #[test]
    fn long_interval_overlaps_later_short_one() {
        let s = overlap_count(&[iv(0, 0, 100), iv(1, 10, 12), iv(1, 50, 60), iv(2, 200, 210)]);
        assert_eq!(s.overlapping_collections, 3);
        assert!((s.fraction() - 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(raw in prop::collection::vec((0u32..4, 0u64..1_000, 0u64..50), 0..60)) {
            let ivs: Vec<_> = raw.iter().map(|&(n, s, len)| iv(n, s, s + len)).collect();
            let expected = ivs.iter().enumerate().filter(|(i, a)| {
                ivs.iter().enumerate().any(|(j, b)| *i != j && a.node != b.node && a.intersects(b))
            }).count();
            prop_assert_eq!(overlap_count(&ivs).overlapping_collections, expected);
        }
    }
}
