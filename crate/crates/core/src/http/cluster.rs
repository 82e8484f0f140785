use std::collections::{BTreeMap, VecDeque};

use crate::metrics::{
    generate_workload, Arrival, ArrivalStream, CollectionInterval, LatencySample, RunResult,
    WorkloadConfig,
};
use crate::runtime::{GcAction, ManagedRuntime, RuntimeConfig, RuntimeError};
use crate::sim::{Engine, Event, EventHandle, NetworkModel, NodeId, SimTime};
use crate::GcMode;

use super::{CoordinatorState, Decision, HttpEventModel};

pub const BALANCER: NodeId = NodeId(0);

#[derive(Debug, Clone, PartialEq)]
pub struct HttpClusterConfig {
    pub backends: u32,
    pub network: NetworkModel,
    pub service_time: SimTime,
    /// Requests a backend serves concurrently; the rest wait in its FIFO.
    pub parallelism: u32,
    pub mode: GcMode,
    pub max_concurrent: u32,
    pub runtime: RuntimeConfig,
    pub bytes_per_request: u64,
    pub background_bytes_per_sec: u64,
    pub workload: WorkloadConfig,
    pub seed: u64,
    pub deadline: SimTime,
}

impl HttpClusterConfig {
    /// Three backends behind one balancer at 6000 req/s, 1 GiB heaps with a
    /// 150 MiB live set, run for `duration`.
    pub fn desk(mode: GcMode, duration: SimTime, seed: u64) -> Self {
        HttpClusterConfig {
            backends: 3,
            network: NetworkModel::from_rtt(NetworkModel::DEFAULT_RTT),
            service_time: SimTime::from_millis(2),
            parallelism: 16,
            mode,
            max_concurrent: 1,
            runtime: RuntimeConfig::http_default(),
            bytes_per_request: 6554,
            background_bytes_per_sec: 0,
            workload: WorkloadConfig {
                rate_per_sec: 6000.0,
                start: SimTime::ZERO,
                duration,
                arrivals: crate::metrics::ArrivalProcess::Uniform,
                mix: None,
                seed,
            },
            seed,
            deadline: duration + SimTime::from_secs(1),
        }
    }
}

/// Where a backend is in the drain-then-collect cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendStatus {
    Serving,
    /// Asked the coordinator, still serving.
    AwaitingSchedule,
    /// Out of rotation, finishing requests already routed to it.
    Draining,
    Collecting,
    /// Pause over, `doneGC` on its way to the balancer.
    Notifying,
}

/// Cyclic round-robin over the backends currently in rotation.
#[derive(Debug, Clone, Default)]
pub struct RoundRobin {
    next: usize,
}

impl RoundRobin {
    /// Index of the next available backend, or `None` if every backend is
    /// out of rotation.
    pub fn route(&mut self, available: &[bool]) -> Option<usize> {
        let n = available.len();
        for k in 0..n {
            let i = (self.next + k) % n;
            if available[i] {
                self.next = (i + 1) % n;
                return Some(i);
            }
        }
        None
    }
}

/// Timeline of one coordinated collection, as observed by the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcRecord {
    pub node: NodeId,
    pub ticket: u64,
    pub asked_at: SimTime,
    pub granted_at: Option<SimTime>,
    pub pause_start: Option<SimTime>,
    pub pause_end: Option<SimTime>,
    pub done_at_balancer: Option<SimTime>,
}

impl GcRecord {
    /// Phase durations, when the event ran to completion through the
    /// coordinator.
    pub fn phases(&self) -> Option<HttpEventModel> {
        let granted = self.granted_at?;
        let start = self.pause_start?;
        let end = self.pause_end?;
        let done = self.done_at_balancer?;
        Some(HttpEventModel {
            t_schedule: granted - self.asked_at,
            t_trailers: start - granted,
            t_gc: end - start,
            t_rpc: done - end,
        })
    }

    pub fn event_time(&self) -> Option<SimTime> {
        Some(self.done_at_balancer? - self.asked_at)
    }
}

/// Time a request spent at its backend, from receipt to reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServedInterval {
    pub request_id: u64,
    pub backend: NodeId,
    pub received_at: SimTime,
    pub replied_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRunResult {
    pub mode: GcMode,
    pub samples: Vec<LatencySample>,
    pub in_flight: usize,
    pub pauses: Vec<CollectionInterval>,
    pub forced_collections: usize,
    pub gc_records: Vec<GcRecord>,
    pub served: Vec<ServedInterval>,
    pub max_balancer_queue: usize,
    /// Events after which in-system request accounting did not balance.
    pub conservation_violations: u64,
    pub events_fired: u64,
}

impl HttpRunResult {
    pub fn into_run_result(self, run: u32) -> RunResult {
        RunResult {
            label: self.mode.label().to_string(),
            run,
            samples: self.samples,
            in_flight: self.in_flight,
            collections: self.pauses,
        }
    }

    /// Requests whose stay at a backend overlapped a pause of that backend.
    pub fn pause_exposed_requests(&self) -> usize {
        let mut by_node: BTreeMap<NodeId, Vec<&CollectionInterval>> = BTreeMap::new();
        for p in &self.pauses {
            by_node.entry(p.node).or_default().push(p);
        }
        self.served
            .iter()
            .filter(|s| {
                by_node.get(&s.backend).is_some_and(|ps| {
                    ps.iter()
                        .any(|p| s.received_at < p.end && p.start < s.replied_at)
                })
            })
            .count()
    }
}

#[derive(Debug, Clone)]
enum Msg {
    Arrival(Arrival),
    Forward { req: u64 },
    Reply { req: u64, from: NodeId },
    ServiceDone { req: u64 },
    PauseEnd,
    AskGc { from: NodeId },
    Grant { routed: u64 },
    DoneGc { from: NodeId, record: Option<usize> },
    NotifyDelivered,
    Background,
}

#[derive(Debug)]
struct InService {
    received_at: SimTime,
    done_at: SimTime,
    handle: EventHandle,
}

#[derive(Debug)]
struct Pause {
    start: SimTime,
    end: SimTime,
}

#[derive(Debug)]
struct Backend {
    id: NodeId,
    status: BackendStatus,
    runtime: ManagedRuntime,
    busy: u32,
    queue: VecDeque<(u64, SimTime)>,
    in_service: BTreeMap<u64, InService>,
    received: u64,
    replied: u64,
    paused: Option<Pause>,
    inbox: Vec<Msg>,
    ticket: Option<u64>,
    granted_routed: Option<u64>,
    record: Option<usize>,
}

impl Backend {
    fn in_flight(&self) -> u64 {
        self.received - self.replied
    }
}

struct Balancer {
    available: Vec<bool>,
    rr: RoundRobin,
    sent: Vec<u64>,
    queue: VecDeque<u64>,
    coordinator: CoordinatorState,
}

/// Round-robin balanced cluster of stateless backends. Node 0 is the
/// balancer, which also hosts the collection coordinator; backends are
/// nodes `1..=backends`. Latency is measured at the balancer.
pub struct HttpCluster {
    cfg: HttpClusterConfig,
    engine: Engine<Msg>,
    balancer: Balancer,
    backends: Vec<Backend>,
    arrivals: ArrivalStream,
    service_time: SimTime,
    issued: Vec<SimTime>,
    issued_count: u64,
    forwarded_total: u64,
    received_total: u64,
    replies_sent: u64,
    samples: Vec<LatencySample>,
    pauses: Vec<CollectionInterval>,
    forced: usize,
    records: Vec<GcRecord>,
    served: Vec<ServedInterval>,
    max_balancer_queue: usize,
    conservation_violations: u64,
}

impl HttpCluster {
    pub fn new(cfg: HttpClusterConfig) -> Result<Self, RuntimeError> {
        assert!(cfg.backends > 0, "an HTTP cluster needs at least one backend");
        assert!(cfg.parallelism > 0, "backends must serve at least one request at a time");
        let mut backends = Vec::with_capacity(cfg.backends as usize);
        for i in 0..cfg.backends {
            backends.push(Backend {
                id: NodeId(i + 1),
                status: BackendStatus::Serving,
                runtime: cfg.runtime.build(cfg.mode)?,
                busy: 0,
                queue: VecDeque::new(),
                in_service: BTreeMap::new(),
                received: 0,
                replied: 0,
                paused: None,
                inbox: Vec::new(),
                ticket: None,
                granted_routed: None,
                record: None,
            });
        }
        let n = cfg.backends as usize;
        let mut engine = Engine::new(cfg.backends + 1, cfg.network, cfg.seed);
        let mut arrivals = generate_workload(&cfg.workload);
        if let Some(first) = arrivals.next() {
            engine
                .schedule(first.at, BALANCER, Msg::Arrival(first))
                .expect("arrivals start at or after zero");
        }
        if cfg.background_bytes_per_sec > 0 && cfg.mode != GcMode::Off {
            for b in &backends {
                engine.schedule_in(BACKGROUND_TICK, b.id, Msg::Background);
            }
        }
        let service_time = cfg.runtime.service_time(cfg.service_time, cfg.mode);
        Ok(HttpCluster {
            balancer: Balancer {
                available: vec![true; n],
                rr: RoundRobin::default(),
                sent: vec![0; n],
                queue: VecDeque::new(),
                coordinator: CoordinatorState::new(cfg.max_concurrent as usize),
            },
            backends,
            engine,
            arrivals,
            service_time,
            issued: Vec::new(),
            issued_count: 0,
            forwarded_total: 0,
            received_total: 0,
            replies_sent: 0,
            samples: Vec::new(),
            pauses: Vec::new(),
            forced: 0,
            records: Vec::new(),
            served: Vec::new(),
            max_balancer_queue: 0,
            conservation_violations: 0,
            cfg,
        })
    }


    pub fn run(mut self) -> HttpRunResult {
        let deadline = self.cfg.deadline;
        while let Some(ev) = self.engine.pop_due(deadline) {
            self.dispatch(ev);
            if !self.balanced() {
                self.conservation_violations += 1;
            }
        }
        let in_flight = (self.issued_count as usize) - self.samples.len();
        HttpRunResult {
            mode: self.cfg.mode,
            samples: self.samples,
            in_flight,
            pauses: self.pauses,
            forced_collections: self.forced,
            gc_records: self.records,
            served: self.served,
            max_balancer_queue: self.max_balancer_queue,
            conservation_violations: self.conservation_violations,
            events_fired: self.engine.events_fired(),
        }
    }

    // issued = completed + queued at the balancer + in transit + at backends.
    fn balanced(&self) -> bool {
        let at_backends: u64 = self
            .backends
            .iter()
            .map(|b| (b.queue.len() + b.in_service.len()) as u64)
            .sum();
        let inboxed: u64 = self
            .backends
            .iter()
            .map(|b| b.inbox.iter().filter(|m| matches!(m, Msg::Forward { .. })).count() as u64)
            .sum();
        let in_transit = (self.forwarded_total - self.received_total) + inboxed;
        let replies_in_transit = self.replies_sent - self.samples.len() as u64;
        self.issued_count
            == self.samples.len() as u64
                + self.balancer.queue.len() as u64
                + in_transit
                + at_backends
                + replies_in_transit
    }

    fn dispatch(&mut self, ev: Event<Msg>) {
        if ev.target == BALANCER {
            self.on_balancer(ev.payload);
            return;
        }
        let idx = ev.target.index() - 1;
        if self.backends[idx].paused.is_some() && !matches!(ev.payload, Msg::PauseEnd) {
            if matches!(ev.payload, Msg::Forward { .. }) {
                self.received_total += 1;
            }
            self.backends[idx].inbox.push(ev.payload);
            return;
        }
        self.on_backend(idx, ev.payload, false);
    }

    fn on_balancer(&mut self, msg: Msg) {
        let now = self.engine.now();
        match msg {
            Msg::Arrival(a) => {
                debug_assert_eq!(a.id as usize, self.issued.len());
                self.issued.push(now);
                self.issued_count += 1;
                self.route_or_queue(a.id);
                if let Some(next) = self.arrivals.next() {
                    self.engine
                        .schedule(next.at, BALANCER, Msg::Arrival(next))
                        .expect("arrivals are generated in order");
                }
            }
            Msg::Reply { req, from } => {
                self.samples.push(LatencySample {
                    request_id: req,
                    issued_at: self.issued[req as usize],
                    completed_at: now,
                    server: from,
                    kind: crate::metrics::RequestKind::Http,
                });
            }
            Msg::AskGc { from } => {
                if self.balancer.coordinator.decide(from) == Decision::Grant {
                    self.grant(from);
                }
            }
            Msg::DoneGc { from, record } => {
                if let Some(r) = record {
                    self.records[r].done_at_balancer = Some(now);
                }
                self.balancer.available[from.index() - 1] = true;
                if let Some(next) = self.balancer.coordinator.finish(from) {
                    self.grant(next);
                }
                while let Some(req) = self.balancer.queue.pop_front() {
                    if !self.try_route(req) {
                        self.balancer.queue.push_front(req);
                        break;
                    }
                }
            }
            other => unreachable!("balancer got {other:?}"),
        }
    }

    fn grant(&mut self, node: NodeId) {
        let i = node.index() - 1;
        self.balancer.available[i] = false;
        let routed = self.balancer.sent[i];
        self.engine
            .send(BALANCER, node, Msg::Grant { routed })
            .expect("backend exists");
    }

    fn try_route(&mut self, req: u64) -> bool {
        let Some(i) = self.balancer.rr.route(&self.balancer.available) else {
            return false;
        };
        self.balancer.sent[i] += 1;
        self.forwarded_total += 1;
        self.engine
            .send(BALANCER, NodeId(i as u32 + 1), Msg::Forward { req })
            .expect("backend exists");
        true
    }

    fn route_or_queue(&mut self, req: u64) {
        if !self.try_route(req) {
            self.balancer.queue.push_back(req);
            self.max_balancer_queue = self.max_balancer_queue.max(self.balancer.queue.len());
        }
    }

    fn on_backend(&mut self, idx: usize, msg: Msg, replayed: bool) {
        let now = self.engine.now();
        match msg {
            Msg::Forward { req } => {
                if !replayed {
                    self.received_total += 1;
                }
                let b = &mut self.backends[idx];
                b.received += 1;
                b.queue.push_back((req, now));
                self.try_start(idx);
            }
            Msg::ServiceDone { req } => {
                let b = &mut self.backends[idx];
                let s = b.in_service.remove(&req).expect("service in progress");
                debug_assert_eq!(s.done_at, now);
                b.busy -= 1;
                b.replied += 1;
                let id = b.id;
                self.served.push(ServedInterval {
                    request_id: req,
                    backend: id,
                    received_at: s.received_at,
                    replied_at: now,
                });
                self.replies_sent += 1;
                self.engine
                    .send(id, BALANCER, Msg::Reply { req, from: id })
                    .expect("balancer exists");
                self.try_start(idx);
                self.check_drain(idx);
            }
            Msg::PauseEnd => self.end_pause(idx),
            Msg::Grant { routed } => {
                let b = &mut self.backends[idx];
                b.status = BackendStatus::Draining;
                b.granted_routed = Some(routed);
                if let Some(r) = b.record {
                    self.records[r].granted_at = Some(now);
                }
                self.check_drain(idx);
            }
            Msg::NotifyDelivered => {
                let b = &mut self.backends[idx];
                if b.status == BackendStatus::Notifying {
                    b.status = BackendStatus::Serving;
                }
            }
            Msg::Background => {
                let bytes = self.cfg.background_bytes_per_sec * BACKGROUND_TICK.as_micros() / 1_000_000;
                let act = self.backends[idx].runtime.allocate(bytes);
                let id = self.backends[idx].id;
                self.engine.schedule_in(BACKGROUND_TICK, id, Msg::Background);
                self.apply(idx, act);
            }
            other => unreachable!("backend got {other:?}"),
        }
    }

    fn try_start(&mut self, idx: usize) {
        loop {
            let b = &mut self.backends[idx];
            if b.paused.is_some() || b.busy >= self.cfg.parallelism {
                return;
            }
            let Some((req, received_at)) = b.queue.pop_front() else {
                return;
            };
            b.busy += 1;
            let done_at = self.engine.now() + self.service_time;
            let handle = self
                .engine
                .schedule(done_at, b.id, Msg::ServiceDone { req })
                .expect("future event");
            b.in_service.insert(
                req,
                InService {
                    received_at,
                    done_at,
                    handle,
                },
            );
            let act = b.runtime.allocate(self.cfg.bytes_per_request);
            self.apply(idx, act);
        }
    }

    fn apply(&mut self, idx: usize, act: GcAction) {
        let now = self.engine.now();
        match act {
            GcAction::None => {}
            GcAction::Deferred { id } => {
                let b = &mut self.backends[idx];
                b.ticket = Some(id);
                b.status = BackendStatus::AwaitingSchedule;
                b.record = Some(self.records.len());
                self.records.push(GcRecord {
                    node: b.id,
                    ticket: id,
                    asked_at: now,
                    granted_at: None,
                    pause_start: None,
                    pause_end: None,
                    done_at_balancer: None,
                });
                let from = b.id;
                self.engine
                    .send(from, BALANCER, Msg::AskGc { from })
                    .expect("balancer exists");
            }
            GcAction::Collect { pause, forced, .. } => {
                if forced {
                    self.forced += 1;
                }
                self.begin_pause(idx, pause, forced);
            }
        }
    }

    fn begin_pause(&mut self, idx: usize, pause: SimTime, forced: bool) {
        let now = self.engine.now();
        let b = &mut self.backends[idx];
        debug_assert!(b.paused.is_none());
        b.paused = Some(Pause {
            start: now,
            end: now + pause,
        });
        // Stop the world: requests in service resume where they left off.
        for s in b.in_service.values_mut() {
            self.engine.cancel(s.handle);
            s.done_at += pause;
        }
        for (&req, s) in b.in_service.iter_mut() {
            s.handle = self
                .engine
                .schedule(s.done_at, b.id, Msg::ServiceDone { req })
                .expect("future event");
        }
        if b.status == BackendStatus::Draining && !forced {
            b.status = BackendStatus::Collecting;
            if let Some(r) = b.record {
                self.records[r].pause_start = Some(now);
            }
        }
        self.engine.schedule_in(pause, b.id, Msg::PauseEnd);
    }

    fn end_pause(&mut self, idx: usize) {
        let now = self.engine.now();
        let b = &mut self.backends[idx];
        let p = b.paused.take().expect("pause in progress");
        b.runtime.complete(p.end - p.start);
        self.pauses.push(CollectionInterval {
            node: b.id,
            start: p.start,
            end: p.end,
        });
        if b.status == BackendStatus::Collecting {
            if let Some(r) = b.record {
                self.records[r].pause_end = Some(now);
            }
            self.notify_done(idx);
        }
        let inbox = std::mem::take(&mut self.backends[idx].inbox);
        for msg in inbox {
            self.on_backend(idx, msg, true);
        }
        self.try_start(idx);
        self.check_drain(idx);
    }

    fn notify_done(&mut self, idx: usize) {
        let b = &mut self.backends[idx];
        b.status = BackendStatus::Notifying;
        b.ticket = None;
        b.granted_routed = None;
        let record = b.record.take();
        let from = b.id;
        let at = self
            .engine
            .send(from, BALANCER, Msg::DoneGc { from, record })
            .expect("balancer exists");
        self.engine
            .schedule(at, from, Msg::NotifyDelivered)
            .expect("future event");
    }

    fn check_drain(&mut self, idx: usize) {
        let b = &mut self.backends[idx];
        if b.status != BackendStatus::Draining || b.paused.is_some() {
            return;
        }
        if Some(b.received) != b.granted_routed || b.in_flight() != 0 {
            return;
        }
        let ticket = b.ticket.expect("draining backends hold a ticket");
        match b.runtime.start_gc(ticket) {
            GcAction::Collect { pause, .. } => self.begin_pause(idx, pause, false),
            // Already collected when the heap ran out; just hand the slot back.
            _ => self.notify_done(idx),
        }
    }
}

const BACKGROUND_TICK: SimTime = SimTime::from_millis(10);
