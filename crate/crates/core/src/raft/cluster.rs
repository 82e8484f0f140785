use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::metrics::{
    generate_workload, Arrival, ArrivalStream, CollectionInterval, LatencySample, RequestKind,
    RequestMix, RunResult, WorkloadConfig,
};
use crate::runtime::{GcAction, ManagedRuntime, RuntimeConfig, RuntimeError};
use crate::sim::{Engine, Event, EventHandle, NetworkModel, NodeId, SimTime};
use crate::GcMode;

use super::checker::{Entry, History};
use super::gc::{quorum, FollowerAction, FollowerEvent, FollowerGcMachine, GcLedger, LedgerDecision};

/// How a server that is not the leader treats client requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientMode {
    /// Forward to the known leader.
    Proxy,
    /// Tell the client who leads and let it resend.
    Retry,
}

/// Periodic pauses forced on the current leader, bypassing coordination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeaderFaults {
    pub mean_interval: SimTime,
    pub min_pause: SimTime,
    pub max_pause: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaftClusterConfig {
    pub servers: u32,
    pub network: NetworkModel,
    /// One-way delay between the client and any server.
    pub client_delay: SimTime,
    pub service_time: SimTime,
    pub mode: GcMode,
    pub runtime: RuntimeConfig,
    pub bytes_per_request: u64,
    pub heartbeat: SimTime,
    pub election_timeout_min: SimTime,
    pub election_timeout_max: SimTime,
    pub client_mode: ClientMode,
    /// Wait after the switch broadcast before the old leader pauses.
    pub t_proxy: SimTime,
    /// Grants expire after this many estimated pauses.
    pub grant_timeout_factor: u32,
    /// The client resends a request unanswered for this long.
    pub client_timeout: SimTime,
    /// Start with server 0 leading term 1 instead of electing.
    pub bootstrap_leader: bool,
    pub leader_faults: Option<LeaderFaults>,
    pub workload: WorkloadConfig,
    pub seed: u64,
    pub deadline: SimTime,
}

impl RaftClusterConfig {
    /// Three servers, 100 req/s with three reads per write, 1 GiB heaps with
    /// a 236 MiB live set.
    pub fn desk(mode: GcMode, duration: SimTime, seed: u64) -> Self {
        RaftClusterConfig {
            servers: 3,
            network: NetworkModel::from_rtt(NetworkModel::DEFAULT_RTT),
            client_delay: SimTime::ZERO,
            service_time: SimTime::from_micros(450),
            mode,
            runtime: RuntimeConfig::raft_default(),
            bytes_per_request: 128 * 1024,
            heartbeat: SimTime::from_millis(50),
            election_timeout_min: SimTime::from_millis(150),
            election_timeout_max: SimTime::from_millis(300),
            client_mode: ClientMode::Proxy,
            t_proxy: SimTime::ZERO,
            grant_timeout_factor: 10,
            client_timeout: SimTime::from_secs(1),
            bootstrap_leader: true,
            leader_faults: None,
            workload: WorkloadConfig {
                rate_per_sec: 100.0,
                start: SimTime::ZERO,
                duration,
                arrivals: crate::metrics::ArrivalProcess::Uniform,
                mix: Some(RequestMix::interleaved(3, 1)),
                seed,
            },
            seed,
            deadline: duration + SimTime::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PauseKind {
    /// Granted by the leader.
    Coordinated,
    /// Collector ran without asking (no handler installed).
    Uncoordinated,
    /// Heap exhausted while the collection was deferred.
    Forced,
    /// Injected by the fault schedule.
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauseRecord {
    pub node: NodeId,
    pub start: SimTime,
    pub end: SimTime,
    pub kind: PauseKind,
    pub as_leader: bool,
}

/// Timeline of one deferred collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaftGcRecord {
    pub node: NodeId,
    pub ticket: u64,
    pub as_leader: bool,
    pub triggered_at: SimTime,
    /// When the leader handed over to its successor.
    pub switched_at: Option<SimTime>,
    pub pause_start: Option<SimTime>,
    pub pause_end: Option<SimTime>,
}

impl RaftGcRecord {
    pub fn event_time(&self) -> Option<SimTime> {
        Some(self.pause_end? - self.triggered_at)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaftRunResult {
    pub mode: GcMode,
    pub samples: Vec<LatencySample>,
    pub in_flight: usize,
    pub pauses: Vec<PauseRecord>,
    pub gc_records: Vec<RaftGcRecord>,
    pub history: History,
    /// Leadership switches performed so a leader could collect.
    pub switches: Vec<SimTime>,
    pub elections_started: u64,
    pub client_resends: u64,
    /// Coordinated pauses that started while more servers were collecting
    /// under grants than the quorum allows.
    pub quorum_guard_violations: u64,
    pub events_fired: u64,
}

impl RaftRunResult {
    /// Collections driven by the managed runtime, for overlap accounting.
    pub fn collections(&self) -> Vec<CollectionInterval> {
        self.pauses
            .iter()
            .filter(|p| p.kind != PauseKind::Fault)
            .map(|p| CollectionInterval {
                node: p.node,
                start: p.start,
                end: p.end,
            })
            .collect()
    }

    /// Coordinated or uncoordinated collections that began on a leader.
    pub fn leader_pauses(&self) -> usize {
        self.pauses
            .iter()
            .filter(|p| p.as_leader && p.kind != PauseKind::Fault)
            .count()
    }

    pub fn into_run_result(self, run: u32) -> RunResult {
        let collections = self.collections();
        RunResult {
            label: self.mode.label().to_string(),
            run,
            samples: self.samples,
            in_flight: self.in_flight,
            collections,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ClientRequest {
    id: u64,
    kind: RequestKind,
    hops: u32,
}

#[derive(Debug, Clone)]
enum Msg {
    Arrival(Arrival),
    Reply { req: u64, from: NodeId },
    Redirect { req: u64, leader: Option<NodeId>, hops: u32 },
    LeaderHint { term: u64, leader: NodeId },
    ClientTimeout { req: u64 },
    Resend { req: u64 },
    InjectFault,

    Request(ClientRequest),
    ServiceDone,
    AppendEntries {
        term: u64,
        leader: NodeId,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<Entry>,
        leader_commit: u64,
    },
    AppendResp { term: u64, from: NodeId, success: bool, match_index: u64 },
    RequestVote { term: u64, candidate: NodeId, last_index: u64, last_term: u64 },
    Vote { term: u64, from: NodeId, granted: bool },
    Switch {
        term: u64,
        successor: NodeId,
        forwarded: Vec<ClientRequest>,
        handover: Vec<(NodeId, u64, SimTime)>,
        last_gc: Option<NodeId>,
        commit: u64,
    },
    AskGc { from: NodeId, ticket: u64, estimate: SimTime },
    GrantGc { term: u64, ticket: u64 },
    DoneGc { from: NodeId, ticket: u64 },
    GrantTimeout { node: NodeId, ticket: u64, term: u64 },
    OwnGc { ticket: u64 },
    ElectionTimeout { epoch: u64 },
    Heartbeat { epoch: u64 },
    PauseEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Follower,
    Candidate,
    Leader,
}

#[derive(Debug)]
struct Processing {
    req: ClientRequest,
    done_at: SimTime,
    handle: EventHandle,
}

#[derive(Debug)]
struct Pause {
    start: SimTime,
    end: SimTime,
    kind: PauseKind,
    ticket: Option<u64>,
    as_leader: bool,
}

struct Server {
    id: NodeId,
    role: Role,
    term: u64,
    voted_for: Option<NodeId>,
    leader: Option<NodeId>,
    log: Vec<Entry>,
    commit: u64,
    applied: u64,
    next_index: Vec<u64>,
    match_index: Vec<u64>,
    votes: BTreeSet<NodeId>,
    election_epoch: u64,
    heartbeat_epoch: u64,
    queue: VecDeque<ClientRequest>,
    processing: Option<Processing>,
    parked: Vec<ClientRequest>,
    runtime: ManagedRuntime,
    gc: FollowerGcMachine,
    ledger: GcLedger,
    switch_pending: bool,
    paused: Option<Pause>,
    inbox: Vec<Msg>,
    gc_record: Option<usize>,
}

impl Server {
    fn last_index(&self) -> u64 {
        self.log.len() as u64
    }

    fn term_at(&self, index: u64) -> u64 {
        if index == 0 {
            0
        } else {
            self.log[(index - 1) as usize].term
        }
    }
}

struct Client {
    leader: NodeId,
    leader_term: u64,
    issued: Vec<(SimTime, RequestKind)>,
    done: Vec<bool>,
    samples: Vec<LatencySample>,
    resends: u64,
}

/// Raft replicated log with Blade-coordinated collection. Servers are nodes
/// `0..servers`; the client is node `servers`.
pub struct RaftCluster {
    cfg: RaftClusterConfig,
    engine: Engine<Msg>,
    servers: Vec<Server>,
    client: Client,
    client_id: NodeId,
    arrivals: ArrivalStream,
    service_time: SimTime,
    history: History,
    pauses: Vec<PauseRecord>,
    records: Vec<RaftGcRecord>,
    switches: Vec<SimTime>,
    elections: u64,
    quorum_violations: u64,
}

const RETRY_BACKOFF: SimTime = SimTime::from_millis(1);

impl RaftCluster {
    pub fn new(cfg: RaftClusterConfig) -> Result<Self, RuntimeError> {
        assert!(cfg.servers > 0, "a Raft cluster needs at least one server");
        assert!(
            cfg.election_timeout_min <= cfg.election_timeout_max,
            "election timeout range is inverted"
        );
        let n = cfg.servers;
        let mut servers = Vec::with_capacity(n as usize);
        for i in 0..n {
            servers.push(Server {
                id: NodeId(i),
                role: Role::Follower,
                term: 0,
                voted_for: None,
                leader: None,
                log: Vec::new(),
                commit: 0,
                applied: 0,
                next_index: vec![1; n as usize],
                match_index: vec![0; n as usize],
                votes: BTreeSet::new(),
                election_epoch: 0,
                heartbeat_epoch: 0,
                queue: VecDeque::new(),
                processing: None,
                parked: Vec::new(),
                runtime: cfg.runtime.build(cfg.mode)?,
                gc: FollowerGcMachine::default(),
                ledger: GcLedger::new(n),
                switch_pending: false,
                paused: None,
                inbox: Vec::new(),
                gc_record: None,
            });
        }
        let engine = Engine::new(n + 1, cfg.network, cfg.seed);
        let arrivals = generate_workload(&cfg.workload);
        let service_time = cfg.runtime.service_time(cfg.service_time, cfg.mode);
        let mut c = RaftCluster {
            engine,
            servers,
            client: Client {
                leader: NodeId(0),
                leader_term: 0,
                issued: Vec::new(),
                done: Vec::new(),
                samples: Vec::new(),
                resends: 0,
            },
            client_id: NodeId(n),
            arrivals,
            service_time,
            history: History {
                applied: vec![Vec::new(); n as usize],
                ..Default::default()
            },
            pauses: Vec::new(),
            records: Vec::new(),
            switches: Vec::new(),
            elections: 0,
            quorum_violations: 0,
            cfg,
        };
        c.start();
        Ok(c)
    }

    fn start(&mut self) {
        if self.cfg.bootstrap_leader {
            for s in &mut self.servers {
                s.term = 1;
                s.voted_for = Some(NodeId(0));
            }
            for i in 1..self.servers.len() {
                self.servers[i].leader = Some(NodeId(0));
                self.servers[i].gc.handle(FollowerEvent::LeaderChange(Some(NodeId(0))));
                self.reset_election_timer(i);
            }
            self.become_leader(0, &[], None);
        } else {
            for i in 0..self.servers.len() {
                self.reset_election_timer(i);
            }
        }
        if let Some(first) = self.arrivals.next() {
            self.engine
                .schedule(first.at, self.client_id, Msg::Arrival(first))
                .expect("arrivals start at or after zero");
        }
        if let Some(f) = self.cfg.leader_faults {
            let at = self.fault_gap(f);
            self.engine.schedule_in(at, self.client_id, Msg::InjectFault);
        }
    }

    pub fn run(mut self) -> RaftRunResult {
        let deadline = self.cfg.deadline;
        while let Some(ev) = self.engine.pop_due(deadline) {
            self.dispatch(ev);
        }
        // Pauses still running at the deadline end there.
        for s in &self.servers {
            if let Some(p) = &s.paused {
                self.pauses.push(PauseRecord {
                    node: s.id,
                    start: p.start,
                    end: p.end,
                    kind: p.kind,
                    as_leader: p.as_leader,
                });
            }
        }
        self.history.final_logs = self.servers.iter().map(|s| s.log.clone()).collect();
        let in_flight = self.client.issued.len() - self.client.samples.len();
        RaftRunResult {
            mode: self.cfg.mode,
            samples: self.client.samples,
            in_flight,
            pauses: self.pauses,
            gc_records: self.records,
            history: self.history,
            switches: self.switches,
            elections_started: self.elections,
            client_resends: self.client.resends,
            quorum_guard_violations: self.quorum_violations,
            events_fired: self.engine.events_fired(),
        }
    }

    fn dispatch(&mut self, ev: Event<Msg>) {
        if ev.target == self.client_id {
            self.on_client(ev.payload);
            return;
        }
        let i = ev.target.index();
        if self.servers[i].paused.is_some() && !matches!(ev.payload, Msg::PauseEnd) {
            self.servers[i].inbox.push(ev.payload);
            return;
        }
        self.on_server(i, ev.payload);
    }

    // ---- client ----

    fn send_to_server(&mut self, server: NodeId, msg: Msg) {
        let at = self.engine.now() + self.cfg.client_delay;
        self.engine.schedule(at, server, msg).expect("future event");
    }

    fn send_to_client(&mut self, msg: Msg) {
        let at = self.engine.now() + self.cfg.client_delay;
        self.engine.schedule(at, self.client_id, msg).expect("future event");
    }

    fn client_send(&mut self, req: u64, hops: u32) {
        let kind = self.client.issued[req as usize].1;
        let leader = self.client.leader;
        self.send_to_server(leader, Msg::Request(ClientRequest { id: req, kind, hops }));
    }

    fn on_client(&mut self, msg: Msg) {
        let now = self.engine.now();
        match msg {
            Msg::Arrival(a) => {
                debug_assert_eq!(a.id as usize, self.client.issued.len());
                self.client.issued.push((now, a.kind));
                self.client.done.push(false);
                self.client_send(a.id, 0);
                self.engine
                    .schedule_in(self.cfg.client_timeout, self.client_id, Msg::ClientTimeout { req: a.id });
                if let Some(next) = self.arrivals.next() {
                    self.engine
                        .schedule(next.at, self.client_id, Msg::Arrival(next))
                        .expect("arrivals are generated in order");
                }
            }
            Msg::Reply { req, from } => {
                let r = req as usize;
                if self.client.done[r] {
                    return;
                }
                self.client.done[r] = true;
                let (issued_at, kind) = self.client.issued[r];
                self.client.samples.push(LatencySample {
                    request_id: req,
                    issued_at,
                    completed_at: now,
                    server: from,
                    kind,
                });
            }
            Msg::Redirect { req, leader, hops } => {
                if self.client.done[req as usize] {
                    return;
                }
                if let Some(l) = leader {
                    self.client.leader = l;
                }
                self.client.resends += 1;
                if leader.is_some() && hops < self.cfg.servers {
                    self.client_send(req, hops + 1);
                } else {
                    self.engine
                        .schedule_in(RETRY_BACKOFF, self.client_id, Msg::Resend { req });
                }
            }
            Msg::Resend { req } => {
                if !self.client.done[req as usize] {
                    self.client_send(req, 0);
                }
            }
            Msg::LeaderHint { term, leader } => {
                if term >= self.client.leader_term {
                    self.client.leader_term = term;
                    self.client.leader = leader;
                }
            }
            Msg::ClientTimeout { req } => {
                if !self.client.done[req as usize] {
                    self.client.resends += 1;
                    self.client_send(req, 0);
                    self.engine
                        .schedule_in(self.cfg.client_timeout, self.client_id, Msg::ClientTimeout { req });
                }
            }
            Msg::InjectFault => self.inject_fault(),
            other => unreachable!("client got {other:?}"),
        }
    }

    fn fault_gap(&mut self, f: LeaderFaults) -> SimTime {
        let mean = f.mean_interval.as_micros();
        SimTime::from_micros(self.engine.rng().random_range(mean / 2..=mean + mean / 2))
    }

    fn inject_fault(&mut self) {
        let f = self.cfg.leader_faults.expect("faults configured");
        let target = self
            .servers
            .iter()
            .filter(|s| s.role == Role::Leader && s.paused.is_none())
            .max_by_key(|s| s.term)
            .map(|s| s.id.index());
        if let Some(i) = target {
            let (lo, hi) = (f.min_pause.as_micros(), f.max_pause.as_micros());
            let d = SimTime::from_micros(self.engine.rng().random_range(lo..=hi));
            self.begin_pause(i, d, PauseKind::Fault, None);
        }
        let at = self.fault_gap(f);
        self.engine.schedule_in(at, self.client_id, Msg::InjectFault);
    }

    // ---- servers ----

    fn send(&mut self, from: usize, to: NodeId, msg: Msg) {
        self.engine
            .send(NodeId(from as u32), to, msg)
            .expect("servers exist");
    }

    fn broadcast_append(&mut self, i: usize) {
        for f in 0..self.servers.len() {
            if f != i {
                self.replicate(i, f);
            }
        }
    }

    fn replicate(&mut self, i: usize, f: usize) {
        let s = &mut self.servers[i];
        let last = s.last_index();
        let next = s.next_index[f].clamp(1, last + 1);
        let prev_index = next - 1;
        let msg = Msg::AppendEntries {
            term: s.term,
            leader: s.id,
            prev_index,
            prev_term: s.term_at(prev_index),
            entries: s.log[prev_index as usize..].to_vec(),
            leader_commit: s.commit,
        };
        s.next_index[f] = last + 1;
        self.send(i, NodeId(f as u32), msg);
    }

    fn reset_election_timer(&mut self, i: usize) {
        let (lo, hi) = (
            self.cfg.election_timeout_min.as_micros(),
            self.cfg.election_timeout_max.as_micros(),
        );
        let d = SimTime::from_micros(self.engine.rng().random_range(lo..=hi));
        let s = &mut self.servers[i];
        s.election_epoch += 1;
        let epoch = s.election_epoch;
        let id = s.id;
        self.engine.schedule_in(d, id, Msg::ElectionTimeout { epoch });
    }

    fn set_leader(&mut self, i: usize, leader: Option<NodeId>) {
        if self.servers[i].leader == leader {
            return;
        }
        self.servers[i].leader = leader;
        let act = self.servers[i].gc.handle(FollowerEvent::LeaderChange(leader));
        self.follower_action(i, act);
        if leader.is_some() {
            let parked = std::mem::take(&mut self.servers[i].parked);
            for req in parked {
                self.on_request(i, req);
            }
        }
    }

    fn become_leader(&mut self, i: usize, handover: &[(NodeId, u64)], last_gc: Option<NodeId>) {
        let n = self.servers.len();
        let s = &mut self.servers[i];
        s.role = Role::Leader;
        s.votes.clear();
        s.election_epoch += 1;
        s.heartbeat_epoch += 1;
        let last = s.last_index();
        s.next_index = vec![last + 1; n];
        s.match_index = vec![0; n];
        s.log.push(Entry {
            term: s.term,
            command: None,
        });
        s.match_index[i] = s.last_index();
        s.ledger.reset();
        s.ledger.adopt(handover, last_gc);
        s.switch_pending = false;
        let (term, id, epoch) = (s.term, s.id, s.heartbeat_epoch);
        self.history.leaders.push((term, id));
        self.broadcast_append(i);
        self.engine
            .schedule_in(self.cfg.heartbeat, id, Msg::Heartbeat { epoch });
        self.send_to_client(Msg::LeaderHint { term, leader: id });
        self.advance_commit(i);
        self.set_leader(i, Some(id));
    }

    fn step_down(&mut self, i: usize, term: u64) {
        let s = &mut self.servers[i];
        let was = s.role;
        if term > s.term {
            s.term = term;
            s.voted_for = None;
        }
        s.role = Role::Follower;
        s.votes.clear();
        s.switch_pending = false;
        if was == Role::Leader {
            s.heartbeat_epoch += 1;
            let q: Vec<_> = s.queue.drain(..).collect();
            s.parked.extend(q);
        }
        if was != Role::Follower {
            self.reset_election_timer(i);
        }
        self.set_leader(i, None);
    }

    fn on_server(&mut self, i: usize, msg: Msg) {
        match msg {
            Msg::Request(req) => self.on_request(i, req),
            Msg::ServiceDone => self.on_service_done(i),
            Msg::AppendEntries {
                term,
                leader,
                prev_index,
                prev_term,
                entries,
                leader_commit,
            } => self.on_append(i, term, leader, prev_index, prev_term, entries, leader_commit),
            Msg::AppendResp {
                term,
                from,
                success,
                match_index,
            } => self.on_append_resp(i, term, from, success, match_index),
            Msg::RequestVote {
                term,
                candidate,
                last_index,
                last_term,
            } => self.on_request_vote(i, term, candidate, last_index, last_term),
            Msg::Vote { term, from, granted } => self.on_vote(i, term, from, granted),
            Msg::Switch {
                term,
                successor,
                forwarded,
                handover,
                last_gc,
                commit,
            } => self.on_switch(i, term, successor, forwarded, handover, last_gc, commit),
            Msg::AskGc {
                from,
                ticket,
                estimate,
            } => {
                if self.servers[i].role == Role::Leader {
                    self.ledger_request(i, from, ticket, estimate);
                }
            }
            Msg::GrantGc { term, ticket } => {
                let s = &self.servers[i];
                if s.role == Role::Leader || term != s.term {
                    return;
                }
                let act = self.servers[i].gc.handle(FollowerEvent::GcAllowed(ticket));
                self.follower_action(i, act);
            }
            Msg::DoneGc { from, ticket } => {
                if self.servers[i].role == Role::Leader {
                    let next = self.servers[i].ledger.on_finished(from, ticket);
                    self.grant_next(i, next);
                }
            }
            Msg::GrantTimeout { node, ticket, term } => {
                let s = &self.servers[i];
                if s.role == Role::Leader && s.term == term {
                    let next = self.servers[i].ledger.on_timeout(node, ticket);
                    self.grant_next(i, next);
                }
            }
            Msg::OwnGc { ticket } => self.start_collection(i, ticket),
            Msg::ElectionTimeout { epoch } => {
                let s = &self.servers[i];
                if s.election_epoch == epoch && s.role != Role::Leader {
                    self.start_election(i);
                }
            }
            Msg::Heartbeat { epoch } => {
                let s = &self.servers[i];
                if s.heartbeat_epoch == epoch && s.role == Role::Leader {
                    let id = s.id;
                    self.broadcast_append(i);
                    self.engine
                        .schedule_in(self.cfg.heartbeat, id, Msg::Heartbeat { epoch });
                }
            }
            Msg::PauseEnd => self.end_pause(i),
            other => unreachable!("server got {other:?}"),
        }
    }

    fn on_request(&mut self, i: usize, mut req: ClientRequest) {
        let s = &mut self.servers[i];
        if s.role == Role::Leader {
            s.queue.push_back(req);
            self.maybe_process(i);
            return;
        }
        let (leader, id) = (s.leader, s.id);
        match (leader, self.cfg.client_mode) {
            (Some(l), ClientMode::Proxy) if l != id && req.hops < self.cfg.servers => {
                req.hops += 1;
                self.send(i, l, Msg::Request(req));
            }
            (leader, ClientMode::Retry) => {
                let hops = req.hops;
                self.send_to_client(Msg::Redirect {
                    req: req.id,
                    leader,
                    hops,
                });
            }
            _ => {
                req.hops = 0;
                self.servers[i].parked.push(req);
            }
        }
    }

    fn maybe_process(&mut self, i: usize) {
        let s = &mut self.servers[i];
        if s.role != Role::Leader || s.processing.is_some() || s.paused.is_some() {
            return;
        }
        let Some(req) = s.queue.pop_front() else {
            self.try_switch(i);
            return;
        };
        let done_at = self.engine.now() + self.service_time;
        let handle = self
            .engine
            .schedule(done_at, s.id, Msg::ServiceDone)
            .expect("future event");
        s.processing = Some(Processing {
            req,
            done_at,
            handle,
        });
        let act = s.runtime.allocate(self.cfg.bytes_per_request);
        self.apply_gc(i, act);
    }

    fn on_service_done(&mut self, i: usize) {
        let s = &mut self.servers[i];
        let p = s.processing.take().expect("request in service");
        debug_assert_eq!(p.done_at, self.engine.now());
        if s.role != Role::Leader {
            self.on_request(i, ClientRequest { hops: 0, ..p.req });
            return;
        }
        match p.req.kind {
            RequestKind::Set => {
                let term = s.term;
                s.log.push(Entry {
                    term,
                    command: Some(p.req.id),
                });
                s.match_index[i] = s.last_index();
                self.broadcast_append(i);
                self.advance_commit(i);
            }
            _ => {
                let id = s.id;
                self.send_to_client(Msg::Reply { req: p.req.id, from: id });
            }
        }
        self.maybe_process(i);
    }

    #[allow(clippy::too_many_arguments)]
    fn on_append(
        &mut self,
        i: usize,
        term: u64,
        leader: NodeId,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<Entry>,
        leader_commit: u64,
    ) {
        if term < self.servers[i].term {
            let s = &self.servers[i];
            let resp = Msg::AppendResp {
                term: s.term,
                from: s.id,
                success: false,
                match_index: 0,
            };
            self.send(i, leader, resp);
            return;
        }
        if term > self.servers[i].term || self.servers[i].role != Role::Follower {
            self.step_down(i, term);
        }
        self.reset_election_timer(i);
        self.set_leader(i, Some(leader));

        let s = &mut self.servers[i];
        if prev_index > s.last_index() || s.term_at(prev_index) != prev_term {
            let hint = s.last_index().min(prev_index - 1);
            let resp = Msg::AppendResp {
                term: s.term,
                from: s.id,
                success: false,
                match_index: hint,
            };
            self.send(i, leader, resp);
            return;
        }
        let mut fresh = 0u64;
        for (k, e) in entries.iter().enumerate() {
            let index = prev_index + 1 + k as u64;
            if index <= s.last_index() {
                if s.term_at(index) == e.term {
                    continue;
                }
                if index <= s.commit {
                    self.history.committed_truncations += s.commit - index + 1;
                }
                s.log.truncate((index - 1) as usize);
            }
            s.log.push(*e);
            if e.command.is_some() {
                fresh += 1;
            }
        }
        let matched = prev_index + entries.len() as u64;
        if leader_commit > s.commit {
            s.commit = leader_commit.min(matched).max(s.commit);
        }
        let resp = Msg::AppendResp {
            term: s.term,
            from: s.id,
            success: true,
            match_index: matched,
        };
        self.send(i, leader, resp);
        self.apply_committed(i);
        if fresh > 0 {
            let act = self.servers[i]
                .runtime
                .allocate(fresh * self.cfg.bytes_per_request);
            self.apply_gc(i, act);
        }
    }

    fn on_append_resp(&mut self, i: usize, term: u64, from: NodeId, success: bool, m: u64) {
        if term > self.servers[i].term {
            self.step_down(i, term);
            return;
        }
        let s = &mut self.servers[i];
        if s.role != Role::Leader || term != s.term {
            return;
        }
        let f = from.index();
        if success {
            s.match_index[f] = s.match_index[f].max(m);
            s.next_index[f] = s.next_index[f].max(m + 1);
            self.advance_commit(i);
            self.try_switch(i);
        } else {
            s.next_index[f] = (m + 1).max(1).min(s.next_index[f]);
            self.replicate(i, f);
        }
    }

    fn advance_commit(&mut self, i: usize) {
        let q = quorum(self.cfg.servers) as usize;
        let s = &mut self.servers[i];
        let mut n = s.last_index();
        while n > s.commit {
            if s.term_at(n) == s.term && s.match_index.iter().filter(|&&m| m >= n).count() >= q {
                s.commit = n;
                break;
            }
            n -= 1;
        }
        self.apply_committed(i);
    }

    fn apply_committed(&mut self, i: usize) {
        let client = self.client_id;
        let delay = self.cfg.client_delay;
        let s = &mut self.servers[i];
        while s.applied < s.commit {
            s.applied += 1;
            let e = s.log[(s.applied - 1) as usize];
            self.history.applied[i].push((s.applied, e));
            if let (Role::Leader, Some(req)) = (s.role, e.command) {
                let at = self.engine.now() + delay;
                self.engine
                    .schedule(at, client, Msg::Reply { req, from: s.id })
                    .expect("future event");
            }
        }
    }

    fn start_election(&mut self, i: usize) {
        self.elections += 1;
        let s = &mut self.servers[i];
        s.term += 1;
        s.role = Role::Candidate;
        s.voted_for = Some(s.id);
        s.votes = BTreeSet::from([s.id]);
        s.switch_pending = false;
        let msg = Msg::RequestVote {
            term: s.term,
            candidate: s.id,
            last_index: s.last_index(),
            last_term: s.term_at(s.last_index()),
        };
        self.reset_election_timer(i);
        self.set_leader(i, None);
        for f in 0..self.servers.len() {
            if f != i {
                self.send(i, NodeId(f as u32), msg.clone());
            }
        }
        if self.servers[i].votes.len() >= quorum(self.cfg.servers) as usize {
            self.become_leader(i, &[], None);
        }
    }

    fn on_request_vote(&mut self, i: usize, term: u64, cand: NodeId, last_index: u64, last_term: u64) {
        if term > self.servers[i].term {
            self.step_down(i, term);
        }
        let s = &mut self.servers[i];
        let my_last = s.term_at(s.last_index());
        let up_to_date = last_term > my_last || (last_term == my_last && last_index >= s.last_index());
        let granted = term == s.term
            && s.role == Role::Follower
            && s.voted_for.is_none_or(|v| v == cand)
            && up_to_date;
        if granted {
            s.voted_for = Some(cand);
        }
        let msg = Msg::Vote {
            term: s.term,
            from: s.id,
            granted,
        };
        if granted {
            self.reset_election_timer(i);
        }
        self.send(i, cand, msg);
    }

    fn on_vote(&mut self, i: usize, term: u64, from: NodeId, granted: bool) {
        if term > self.servers[i].term {
            self.step_down(i, term);
            return;
        }
        let s = &mut self.servers[i];
        if s.role != Role::Candidate || term != s.term || !granted {
            return;
        }
        s.votes.insert(from);
        if s.votes.len() >= quorum(self.cfg.servers) as usize {
            self.become_leader(i, &[], None);
        }
    }

    // ---- collection coordination ----

    fn apply_gc(&mut self, i: usize, act: GcAction) {
        let now = self.engine.now();
        match act {
            GcAction::None => {}
            GcAction::Deferred { id } => {
                let s = &mut self.servers[i];
                s.gc_record = Some(self.records.len());
                self.records.push(RaftGcRecord {
                    node: s.id,
                    ticket: id,
                    as_leader: s.role == Role::Leader,
                    triggered_at: now,
                    switched_at: None,
                    pause_start: None,
                    pause_end: None,
                });
                let act = s.gc.handle(FollowerEvent::GcRequest(id));
                self.follower_action(i, act);
            }
            GcAction::Collect { id, pause, forced } => {
                let kind = if forced {
                    PauseKind::Forced
                } else {
                    PauseKind::Uncoordinated
                };
                self.begin_pause(i, pause, kind, Some(id));
            }
        }
    }

    fn follower_action(&mut self, i: usize, act: FollowerAction) {
        match act {
            FollowerAction::Nothing => {}
            FollowerAction::Ask { leader, ticket } => {
                let estimate = self.servers[i]
                    .runtime
                    .ticket(ticket)
                    .map_or(SimTime::ZERO, |t| t.estimated_pause);
                if leader.index() == i {
                    if self.servers[i].role == Role::Leader {
                        self.ledger_request(i, leader, ticket, estimate);
                    }
                } else {
                    let from = self.servers[i].id;
                    self.send(
                        i,
                        leader,
                        Msg::AskGc {
                            from,
                            ticket,
                            estimate,
                        },
                    );
                }
            }
            FollowerAction::StartGc(ticket) => self.start_collection(i, ticket),
        }
    }

    fn start_collection(&mut self, i: usize, ticket: u64) {
        match self.servers[i].runtime.start_gc(ticket) {
            GcAction::Collect { pause, .. } => {
                self.begin_pause(i, pause, PauseKind::Coordinated, Some(ticket));
            }
            // Already collected (forced) or stale: give the slot back.
            _ => self.report_done(i, ticket),
        }
    }

    fn report_done(&mut self, i: usize, ticket: u64) {
        let s = &self.servers[i];
        let from = s.id;
        match s.leader {
            Some(l) if l != from => self.send(i, l, Msg::DoneGc { from, ticket }),
            Some(_) if s.role == Role::Leader => {
                let next = self.servers[i].ledger.on_finished(from, ticket);
                self.grant_next(i, next);
            }
            _ => {}
        }
    }

    fn ledger_request(&mut self, i: usize, from: NodeId, ticket: u64, estimate: SimTime) {
        let me = self.servers[i].id;
        match self.servers[i].ledger.on_request(me, from, ticket) {
            LedgerDecision::Grant => self.send_grant(i, from, ticket, estimate),
            LedgerDecision::AlreadyGranted if from != me => {
                self.send_grant(i, from, ticket, estimate)
            }
            LedgerDecision::Switch => {
                self.servers[i].switch_pending = true;
                self.try_switch(i);
            }
            _ => {}
        }
    }

    fn grant_next(&mut self, i: usize, next: Option<(NodeId, u64)>) {
        let Some((node, ticket)) = next else {
            return;
        };
        if node.index() == i {
            self.servers[i].switch_pending = true;
            self.try_switch(i);
        } else {
            let est = self.servers[i].runtime.estimator().default_pause();
            self.send_grant(i, node, ticket, est);
        }
    }

    fn grant_timeout(&self, estimate: SimTime) -> SimTime {
        let est = estimate.max(self.cfg.runtime.default_pause);
        est * self.cfg.grant_timeout_factor as u64
    }

    fn send_grant(&mut self, i: usize, to: NodeId, ticket: u64, estimate: SimTime) {
        let term = self.servers[i].term;
        self.send(i, to, Msg::GrantGc { term, ticket });
        let id = self.servers[i].id;
        let timeout = self.grant_timeout(estimate);
        self.engine.schedule_in(
            timeout,
            id,
            Msg::GrantTimeout {
                node: to,
                ticket,
                term,
            },
        );
    }

    /// Hands leadership to an up-to-date server once nothing is in service
    /// and everything appended is committed.
    fn try_switch(&mut self, i: usize) {
        let s = &self.servers[i];
        if !s.switch_pending
            || s.role != Role::Leader
            || s.processing.is_some()
            || s.paused.is_some()
            || s.commit < s.last_index()
        {
            return;
        }
        let last = s.last_index();
        let eligible = |f: usize| {
            f != i
                && !s.ledger.granted().contains_key(&NodeId(f as u32))
                && s.match_index[f] == last
        };
        let target = match s.ledger.last_gc() {
            Some(g) if g.index() != i && !s.ledger.granted().contains_key(&g) => {
                if !eligible(g.index()) {
                    return;
                }
                g.index()
            }
            _ => {
                let c: Vec<usize> = (0..self.servers.len()).filter(|&f| eligible(f)).collect();
                if c.is_empty() {
                    return;
                }
                c[self.engine.rng().random_range(0..c.len())]
            }
        };
        let now = self.engine.now();
        let s = &mut self.servers[i];
        let me = s.id;
        let successor = NodeId(target as u32);
        let ticket = *s.ledger.granted().get(&me).expect("leader holds its own grant");
        let estimate = s
            .runtime
            .ticket(ticket)
            .map_or(SimTime::ZERO, |t| t.estimated_pause);
        let handover: Vec<(NodeId, u64, SimTime)> = s
            .ledger
            .granted()
            .iter()
            .map(|(&n, &t)| (n, t, if n == me { estimate } else { SimTime::ZERO }))
            .collect();
        let last_gc = s.ledger.last_gc();
        s.ledger.reset();
        s.switch_pending = false;
        s.term += 1;
        s.voted_for = Some(successor);
        s.role = Role::Follower;
        s.heartbeat_epoch += 1;
        let mut forwarded: Vec<ClientRequest> = s.queue.drain(..).collect();
        forwarded.append(&mut s.parked);
        let msg = Msg::Switch {
            term: s.term,
            successor,
            forwarded,
            handover,
            last_gc,
            commit: s.commit,
        };
        // The pause now belongs to the successor's ledger.
        s.gc.handle(FollowerEvent::GcAllowed(ticket));
        if let Some(r) = s.gc_record {
            self.records[r].switched_at = Some(now);
        }
        self.switches.push(now);
        for f in 0..self.servers.len() {
            if f != i {
                self.send(i, NodeId(f as u32), msg.clone());
            }
        }
        self.reset_election_timer(i);
        self.set_leader(i, Some(successor));
        let wait = self.cfg.network.max_one_way() + self.cfg.t_proxy;
        self.engine.schedule_in(wait, me, Msg::OwnGc { ticket });
    }

    #[allow(clippy::too_many_arguments)]
    fn on_switch(
        &mut self,
        i: usize,
        term: u64,
        successor: NodeId,
        forwarded: Vec<ClientRequest>,
        handover: Vec<(NodeId, u64, SimTime)>,
        last_gc: Option<NodeId>,
        commit: u64,
    ) {
        if term <= self.servers[i].term {
            return;
        }
        self.step_down(i, term);
        self.servers[i].voted_for = Some(successor);
        if successor.index() != i {
            self.reset_election_timer(i);
            self.set_leader(i, Some(successor));
            return;
        }
        let s = &mut self.servers[i];
        s.commit = s.commit.max(commit.min(s.last_index()));
        self.apply_committed(i);
        let pairs: Vec<(NodeId, u64)> = handover.iter().map(|&(n, t, _)| (n, t)).collect();
        self.become_leader(i, &pairs, last_gc);
        let term = self.servers[i].term;
        let id = self.servers[i].id;
        for (n, ticket, est) in handover {
            let timeout = self.grant_timeout(est);
            self.engine
                .schedule_in(timeout, id, Msg::GrantTimeout { node: n, ticket, term });
        }
        for req in forwarded {
            self.on_request(i, ClientRequest { hops: 0, ..req });
        }
    }

    // ---- pauses ----

    fn begin_pause(&mut self, i: usize, d: SimTime, kind: PauseKind, ticket: Option<u64>) {
        let now = self.engine.now();
        let s = &mut self.servers[i];
        debug_assert!(s.paused.is_none());
        if let Some(p) = &mut s.processing {
            self.engine.cancel(p.handle);
            p.done_at += d;
            p.handle = self
                .engine
                .schedule(p.done_at, s.id, Msg::ServiceDone)
                .expect("future event");
        }
        s.paused = Some(Pause {
            start: now,
            end: now + d,
            kind,
            ticket,
            as_leader: s.role == Role::Leader,
        });
        if let (Some(r), Some(t)) = (s.gc_record, ticket) {
            if self.records[r].ticket == t {
                self.records[r].pause_start = Some(now);
            }
        }
        if kind == PauseKind::Coordinated {
            let collecting = self
                .servers
                .iter()
                .filter(|s| s.paused.as_ref().is_some_and(|p| p.kind == PauseKind::Coordinated))
                .count() as u32;
            if collecting + quorum(self.cfg.servers) > self.cfg.servers {
                self.quorum_violations += 1;
            }
        }
        self.engine.schedule_in(d, NodeId(i as u32), Msg::PauseEnd);
    }

    fn end_pause(&mut self, i: usize) {
        let now = self.engine.now();
        let s = &mut self.servers[i];
        let p = s.paused.take().expect("pause in progress");
        self.pauses.push(PauseRecord {
            node: s.id,
            start: p.start,
            end: p.end,
            kind: p.kind,
            as_leader: p.as_leader,
        });
        if p.kind != PauseKind::Fault {
            s.runtime.complete(p.end - p.start);
        }
        if let (Some(r), Some(t)) = (s.gc_record, p.ticket) {
            if self.records[r].ticket == t {
                self.records[r].pause_end = Some(now);
                s.gc_record = None;
            }
        }
        if let (PauseKind::Coordinated | PauseKind::Forced, Some(t)) = (p.kind, p.ticket) {
            if p.kind == PauseKind::Coordinated || s.gc.req_in_flight() != Some(t) {
                self.report_done(i, t);
            }
        }
        let inbox = std::mem::take(&mut self.servers[i].inbox);
        for msg in inbox {
            if self.servers[i].paused.is_some() {
                self.servers[i].inbox.push(msg);
            } else {
                self.on_server(i, msg);
            }
        }
        self.maybe_process(i);
    }
}
