use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NetworkModel, NodeId, SimError, SimTime};

/// A scheduled occurrence. `(fire_at, seq)` totally orders all events of a
/// simulation; `seq` is the insertion counter, so equal-time events fire in
/// the order they were scheduled.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

/// Permits cancelling a scheduled event before it fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimStats {
    pub events_fired: u64,
    pub clock: SimTime,
}

/// One fired event as recorded by the optional trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Discrete-event engine: virtual clock, ordered queue, seeded randomness and
/// the network model. Single-threaded; independent engines share nothing.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    pending: HashSet<u64>,
    node_count: u32,
    network: NetworkModel,
    rng: ChaCha8Rng,
    fired: u64,
    trace: Option<Vec<TraceRecord>>,
}

impl<P> Engine<P> {
    pub fn new(node_count: u32, network: NetworkModel, seed: u64) -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            node_count,
            network,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fired: 0,
            trace: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn network(&self) -> &NetworkModel {
        &self.network
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Number of events still queued and not cancelled.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn events_fired(&self) -> u64 {
        self.fired
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    fn check_node(&self, node: NodeId) -> Result<(), SimError> {
        if node.0 < self.node_count {
            Ok(())
        } else {
            Err(SimError::UnknownNode(node))
        }
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: NodeId,
        payload: P,
    ) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::InThePast {
                at: fire_at,
                now: self.now,
            });
        }
        self.check_node(target)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq);
        self.queue.push(Queued(Event {
            fire_at,
            seq,
            target,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    /// Schedules `payload` for `target` after `delay` from now.
    pub fn schedule_in(&mut self, delay: SimTime, target: NodeId, payload: P) -> EventHandle {
        self.schedule(self.now + delay, target, payload)
            .expect("schedule_in with a valid target cannot fail")
    }

    /// Returns false if the event already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0)
    }

    /// Delivers `payload` to `to` after the network's one-way delay.
    /// Returns the delivery time.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: P) -> Result<SimTime, SimError> {
        self.check_node(from)?;
        self.check_node(to)?;
        let delay = self.network.sample_delay(&mut self.rng);
        let at = self.now + delay;
        self.schedule(at, to, payload)?;
        Ok(at)
    }

    /// Pops the next live event with `fire_at <= deadline`, advancing the clock.
    pub fn pop_due(&mut self, deadline: SimTime) -> Option<Event<P>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > deadline {
                return None;
            }
            let Queued(ev) = self.queue.pop().expect("peeked");
            if !self.pending.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.fired += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRecord {
                    fire_at: ev.fire_at,
                    seq: ev.seq,
                    target: ev.target,
                });
            }
            return Some(ev);
        }
    }

    /// Processes every event due at or before `deadline`, then sets the clock
    /// to `deadline`. Events beyond the deadline stay queued.
    pub fn run_until<F>(&mut self, deadline: SimTime, mut handler: F) -> SimStats
    where
        F: FnMut(&mut Engine<P>, Event<P>),
    {
        let before = self.fired;
        while let Some(ev) = self.pop_due(deadline) {
            handler(self, ev);
        }
        if deadline > self.now {
            self.now = deadline;
        }
        SimStats {
            events_fired: self.fired - before,
            clock: self.now,
        }
    }
}
