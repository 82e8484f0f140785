//! Mock managed runtime: heap growth, stop-the-world collections and the
//! application upcall interface for scheduling them.
//!
//! A node drives its [`ManagedRuntime`] with [`ManagedRuntime::allocate`].
//! When occupancy crosses the trigger the runtime opens a
//! [`CollectionTicket`] and, if a handler is registered, asks it whether to
//! collect now. A `false` answer defers the collection until
//! [`ManagedRuntime::start_gc`] is called with the ticket id, or until the
//! heap would exceed its hard limit, in which case the collection is forced
//! and the later `start_gc` is ignored.
//!
//! The runtime is clock-free. Every call that starts a collection returns a
//! [`GcAction::Collect`] carrying the pause length; the caller stops the node
//! for that long and then calls [`ManagedRuntime::complete`].

mod cost;
mod estimator;
mod heap;

pub use cost::CollectorCostModel;
pub use estimator::PauseEstimator;
pub use heap::HeapModel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;
use crate::GcMode;

pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("trigger ({trigger} B) must exceed the live set ({live} B)")]
    TriggerBelowLive { trigger: u64, live: u64 },
    #[error("trigger ({trigger} B) plus low-water mark ({low_water} B) exceeds the hard limit ({hard_limit} B)")]
    NoDeferralHeadroom {
        trigger: u64,
        low_water: u64,
        hard_limit: u64,
    },
}

/// Per-node runtime parameters shared by every server of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub live_bytes: u64,
    pub trigger_bytes: u64,
    pub hard_limit_bytes: u64,
    pub low_water_bytes: u64,
    pub cost: CollectorCostModel,
    /// Estimate offered before two pauses have been observed.
    pub default_pause: SimTime,
    /// Upcalls with a larger estimate are deferred.
    pub defer_threshold: SimTime,
    /// Extra fraction of service time paid when memory is never recycled.
    pub gc_off_penalty: f64,
}

impl RuntimeConfig {
    /// 150 MiB live set in a 1 GiB heap, collecting at twice the live set.
    /// Pauses come out at 12.423 ms.
    pub fn http_default() -> Self {
        RuntimeConfig {
            live_bytes: 150 * MIB,
            trigger_bytes: 300 * MIB,
            hard_limit_bytes: GIB,
            low_water_bytes: 200 * MIB,
            cost: CollectorCostModel::new(
                CollectorCostModel::DEFAULT_PAUSE_PER_GB,
                SimTime::from_micros(8_761),
            ),
            default_pause: SimTime::from_millis(10),
            defer_threshold: SimTime::from_millis(1),
            gc_off_penalty: 0.0,
        }
    }

    /// 236 MiB live set in a 1 GiB heap; pauses of about 96 ms.
    pub fn raft_default() -> Self {
        RuntimeConfig {
            live_bytes: 236 * MIB,
            trigger_bytes: 472 * MIB,
            hard_limit_bytes: GIB,
            low_water_bytes: 200 * MIB,
            cost: CollectorCostModel::new(
                CollectorCostModel::DEFAULT_PAUSE_PER_GB,
                SimTime::from_millis(90),
            ),
            default_pause: SimTime::from_millis(10),
            defer_threshold: SimTime::from_millis(1),
            gc_off_penalty: 0.0,
        }
    }

    pub fn heap(&self) -> Result<HeapModel, RuntimeError> {
        HeapModel::new(
            self.live_bytes,
            self.trigger_bytes,
            self.hard_limit_bytes,
            self.low_water_bytes,
        )
    }

    /// Builds a node runtime for `mode`: no handler for `On`, a disabled
    /// collector for `Off`, and a [`ThresholdPolicy`] handler for `Blade`.
    pub fn build(&self, mode: GcMode) -> Result<ManagedRuntime, RuntimeError> {
        let heap = self.heap()?;
        Ok(match mode {
            GcMode::Off => ManagedRuntime::without_collector(heap, self.cost),
            GcMode::On => ManagedRuntime::new(heap, self.cost, PauseEstimator::new(self.default_pause)),
            GcMode::Blade => {
                let mut rt =
                    ManagedRuntime::new(heap, self.cost, PauseEstimator::new(self.default_pause));
                rt.reg_gc_hand(Box::new(ThresholdPolicy {
                    defer_above: self.defer_threshold,
                }));
                rt
            }
        })
    }

    /// Service time under `mode`, inflated by the fresh-memory penalty when
    /// the collector is off.
    pub fn service_time(&self, base: SimTime, mode: GcMode) -> SimTime {
        if mode == GcMode::Off && self.gc_off_penalty > 0.0 {
            SimTime::from_micros((base.as_micros() as f64 * (1.0 + self.gc_off_penalty)).round() as u64)
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TicketState {
    Offered,
    Deferred,
    Running,
    Completed,
    ForcedCompleted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionTicket {
    pub id: u64,
    pub allocated: u64,
    pub estimated_pause: SimTime,
    pub state: TicketState,
}

/// Arguments of the collection upcall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Upcall {
    pub id: u64,
    pub allocated: u64,
    pub estimated_pause: SimTime,
}

/// Application callback invoked when a collection is due. Return `true` to
/// collect immediately, `false` to defer until `start_gc(id)`. Runs inside
/// the allocating event and must not block.
pub trait GcHandler {
    fn on_gc(&mut self, upcall: &Upcall) -> bool;
}

impl<F: FnMut(&Upcall) -> bool> GcHandler for F {
    fn on_gc(&mut self, upcall: &Upcall) -> bool {
        self(upcall)
    }
}

/// Collect immediately when the predicted pause is short, defer otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdPolicy {
    pub defer_above: SimTime,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            defer_above: SimTime::from_millis(1),
        }
    }
}

impl GcHandler for ThresholdPolicy {
    fn on_gc(&mut self, upcall: &Upcall) -> bool {
        upcall.estimated_pause <= self.defer_above
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcAction {
    None,
    /// The handler deferred ticket `id`; the application must eventually
    /// call `start_gc(id)`.
    Deferred { id: u64 },
    /// The node must stop the world for `pause`, then call `complete`.
    Collect { id: u64, pause: SimTime, forced: bool },
}

pub struct ManagedRuntime {
    heap: HeapModel,
    estimator: PauseEstimator,
    cost: CollectorCostModel,
    handler: Option<Box<dyn GcHandler + Send>>,
    enabled: bool,
    tickets: Vec<CollectionTicket>,
    open: Option<u64>,
    running: Option<u64>,
    // Allocation requests that arrived during a pause or caused a forced
    // collection; charged once the collection completes.
    carried: u64,
}

impl std::fmt::Debug for ManagedRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManagedRuntime")
            .field("heap", &self.heap)
            .field("enabled", &self.enabled)
            .field("has_handler", &self.handler.is_some())
            .field("open", &self.open)
            .field("running", &self.running)
            .finish()
    }
}

impl ManagedRuntime {
    pub fn new(heap: HeapModel, cost: CollectorCostModel, estimator: PauseEstimator) -> Self {
        ManagedRuntime {
            heap,
            estimator,
            cost,
            handler: None,
            enabled: true,
            tickets: Vec::new(),
            open: None,
            running: None,
            carried: 0,
        }
    }

    /// A runtime whose collector never runs; memory is never reclaimed.
    pub fn without_collector(heap: HeapModel, cost: CollectorCostModel) -> Self {
        let mut rt = ManagedRuntime::new(heap, cost, PauseEstimator::new(SimTime::ZERO));
        rt.enabled = false;
        rt
    }

    /// Registers the collection upcall, replacing any previous handler.
    pub fn reg_gc_hand(&mut self, handler: Box<dyn GcHandler + Send>) {
        self.handler = Some(handler);
    }

    pub fn heap(&self) -> &HeapModel {
        &self.heap
    }

    pub fn estimator(&self) -> &PauseEstimator {
        &self.estimator
    }

    pub fn cost_model(&self) -> &CollectorCostModel {
        &self.cost
    }

    pub fn collector_enabled(&self) -> bool {
        self.enabled
    }

    pub fn ticket(&self, id: u64) -> Option<&CollectionTicket> {
        id.checked_sub(1)
            .and_then(|i| self.tickets.get(i as usize))
    }

    pub fn tickets(&self) -> &[CollectionTicket] {
        &self.tickets
    }

    pub fn is_collecting(&self) -> bool {
        self.running.is_some()
    }

    fn ticket_mut(&mut self, id: u64) -> &mut CollectionTicket {
        &mut self.tickets[(id - 1) as usize]
    }

    fn open_ticket(&mut self) -> u64 {
        let id = self.tickets.len() as u64 + 1;
        let estimated_pause = self.estimator.estimate(self.heap.live_bytes);
        self.tickets.push(CollectionTicket {
            id,
            allocated: self.heap.allocated_bytes,
            estimated_pause,
            state: TicketState::Offered,
        });
        self.open = Some(id);
        id
    }

    fn begin(&mut self, id: u64, forced: bool) -> GcAction {
        self.ticket_mut(id).state = if forced {
            TicketState::ForcedCompleted
        } else {
            TicketState::Running
        };
        self.open = None;
        self.running = Some(id);
        GcAction::Collect {
            id,
            pause: self.cost.pause(self.heap.live_bytes),
            forced,
        }
    }

    pub fn allocate(&mut self, bytes: u64) -> GcAction {
        if bytes == 0 {
            return GcAction::None;
        }
        if !self.enabled {
            self.heap.allocated_bytes += bytes;
            return GcAction::None;
        }
        if self.running.is_some() {
            self.carried += bytes;
            return GcAction::None;
        }
        if self.heap.allocated_bytes + bytes > self.heap.hard_limit_bytes {
            // Exhaustion: collect before satisfying the allocation.
            let id = match self.open {
                Some(id) => id,
                None => self.open_ticket(),
            };
            self.carried += bytes;
            return self.begin(id, true);
        }
        self.heap.allocated_bytes += bytes;
        if self.open.is_some() || self.heap.allocated_bytes < self.heap.trigger_bytes {
            return GcAction::None;
        }
        let id = self.open_ticket();
        let collect_now = match self.handler.as_mut() {
            None => true,
            Some(handler) => {
                let t = &self.tickets[(id - 1) as usize];
                handler.on_gc(&Upcall {
                    id,
                    allocated: t.allocated,
                    estimated_pause: t.estimated_pause,
                })
            }
        };
        if collect_now {
            self.begin(id, false)
        } else {
            self.ticket_mut(id).state = TicketState::Deferred;
            GcAction::Deferred { id }
        }
    }

    /// Starts deferred collection `id`. Any other state, or an unknown id,
    /// is a no-op.
    pub fn start_gc(&mut self, id: u64) -> GcAction {
        if self.running.is_some() {
            return GcAction::None;
        }
        match self.ticket(id) {
            Some(t) if t.state == TicketState::Deferred => self.begin(id, false),
            _ => GcAction::None,
        }
    }

    /// Ends the running collection: the heap shrinks to the live set, the
    /// observed pause joins the estimator history and the ticket completes.
    /// Returns the finished ticket id.
    pub fn complete(&mut self, observed_pause: SimTime) -> Option<u64> {
        let id = self.running.take()?;
        let t = self.ticket_mut(id);
        if t.state == TicketState::Running {
            t.state = TicketState::Completed;
        }
        self.estimator.record(self.heap.live_bytes, observed_pause);
        self.heap.allocated_bytes = self.heap.live_bytes;
        let carried = std::mem::take(&mut self.carried);
        // Charging the carried bytes can itself cross the trigger; the next
        // allocation will observe it.
        self.heap.allocated_bytes = (self.heap.allocated_bytes + carried).min(self.heap.hard_limit_bytes);
        Some(id)
    }
}
