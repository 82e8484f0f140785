use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::http::HttpClusterConfig;
use crate::metrics::{ArrivalProcess, MixOrder, RequestMix, WorkloadConfig};
use crate::raft::{ClientMode, LeaderFaults, RaftClusterConfig};
use crate::runtime::{CollectorCostModel, RuntimeConfig, MIB};
use crate::sim::{NetworkModel, SimTime};
use crate::GcMode;

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Http,
    Raft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientModeSpec {
    Proxy,
    Retry,
}

// On-disk form. Every key is optional; missing keys take the defaults of
// the chosen system.

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    system: Option<System>,
    gc_mode: Option<GcMode>,
    runs: Option<u32>,
    topology: Option<RawTopology>,
    runtime: Option<RawRuntime>,
    workload: Option<RawWorkload>,
    http: Option<RawHttp>,
    raft: Option<RawRaft>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    nodes: Option<u32>,
    rtt_us: Option<u64>,
    jitter_us: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRuntime {
    live_mib: Option<f64>,
    trigger_mib: Option<f64>,
    hard_limit_mib: Option<f64>,
    low_water_mib: Option<f64>,
    pause_per_gib_ms: Option<f64>,
    fixed_overhead_ms: Option<f64>,
    default_pause_ms: Option<f64>,
    defer_threshold_ms: Option<f64>,
    gc_off_penalty: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    rate: Option<f64>,
    duration_s: Option<f64>,
    start_ms: Option<f64>,
    deadline_s: Option<f64>,
    arrivals: Option<ArrivalProcess>,
    gets: Option<u32>,
    sets: Option<u32>,
    mix_order: Option<MixOrder>,
    bytes_per_request: Option<u64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHttp {
    service_us: Option<u64>,
    parallelism: Option<u32>,
    max_concurrent: Option<u32>,
    background_bytes_per_sec: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRaft {
    service_us: Option<u64>,
    heartbeat_ms: Option<f64>,
    election_timeout_min_ms: Option<f64>,
    election_timeout_max_ms: Option<f64>,
    client_mode: Option<ClientModeSpec>,
    client_delay_us: Option<u64>,
    client_timeout_ms: Option<f64>,
    t_proxy_us: Option<u64>,
    grant_timeout_factor: Option<u32>,
    bootstrap_leader: Option<bool>,
    faults: Option<RawFaults>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFaults {
    mean_interval_ms: Option<f64>,
    min_pause_ms: Option<f64>,
    max_pause_ms: Option<f64>,
}

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub system: System,
    pub gc_mode: GcMode,
    /// Repetitions; run `k` uses seed `seed + k`.
    pub runs: u32,
    pub nodes: u32,
    pub network: NetworkModel,
    pub runtime: RuntimeConfig,
    pub workload: WorkloadSpec,
    pub http: HttpSpec,
    pub raft: RaftSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub rate_per_sec: f64,
    pub duration: SimTime,
    pub start: SimTime,
    pub deadline: SimTime,
    pub arrivals: ArrivalProcess,
    pub mix: RequestMix,
    pub bytes_per_request: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSpec {
    pub service_time: SimTime,
    pub parallelism: u32,
    pub max_concurrent: u32,
    pub background_bytes_per_sec: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaftSpec {
    pub service_time: SimTime,
    pub heartbeat: SimTime,
    pub election_timeout_min: SimTime,
    pub election_timeout_max: SimTime,
    pub client_mode: ClientMode,
    pub client_delay: SimTime,
    pub client_timeout: SimTime,
    pub t_proxy: SimTime,
    pub grant_timeout_factor: u32,
    pub bootstrap_leader: bool,
    pub faults: Option<LeaderFaults>,
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn ms(field: &str, v: f64) -> Result<SimTime, ScenarioError> {
    if !v.is_finite() || v < 0.0 {
        return Err(invalid(field, format!("must be a non-negative number, got {v}")));
    }
    Ok(SimTime::from_millis_f64(v))
}

fn positive_ms(field: &str, v: f64) -> Result<SimTime, ScenarioError> {
    let t = ms(field, v)?;
    if t == SimTime::ZERO {
        return Err(invalid(field, "must be positive"));
    }
    Ok(t)
}

fn mib(field: &str, v: f64) -> Result<u64, ScenarioError> {
    if !v.is_finite() || v < 0.0 {
        return Err(invalid(field, format!("must be a non-negative number, got {v}")));
    }
    Ok((v * MIB as f64).round() as u64)
}

fn to_mib(bytes: u64) -> f64 {
    bytes as f64 / MIB as f64
}

fn to_ms(t: SimTime) -> f64 {
    t.as_millis_f64()
}

fn http_spec() -> HttpSpec {
    let h = HttpClusterConfig::desk(GcMode::Blade, SimTime::from_secs(1), 1);
    HttpSpec {
        service_time: h.service_time,
        parallelism: h.parallelism,
        max_concurrent: h.max_concurrent,
        background_bytes_per_sec: h.background_bytes_per_sec,
    }
}

fn raft_spec() -> RaftSpec {
    let r = RaftClusterConfig::desk(GcMode::Blade, SimTime::from_secs(1), 1);
    RaftSpec {
        service_time: r.service_time,
        heartbeat: r.heartbeat,
        election_timeout_min: r.election_timeout_min,
        election_timeout_max: r.election_timeout_max,
        client_mode: r.client_mode,
        client_delay: r.client_delay,
        client_timeout: r.client_timeout,
        t_proxy: r.t_proxy,
        grant_timeout_factor: r.grant_timeout_factor,
        bootstrap_leader: r.bootstrap_leader,
        faults: None,
    }
}

impl ScenarioConfig {
    /// Built-in defaults for `system`: the three-node Raft setup or the
    /// three-backend HTTP setup.
    pub fn defaults(system: System) -> Self {
        match system {
            System::Raft => {
                let r = RaftClusterConfig::desk(GcMode::Blade, SimTime::from_secs(600), 1);
                ScenarioConfig {
                    system,
                    gc_mode: GcMode::Blade,
                    runs: 1,
                    nodes: r.servers,
                    network: r.network,
                    runtime: r.runtime.clone(),
                    workload: WorkloadSpec {
                        rate_per_sec: r.workload.rate_per_sec,
                        duration: r.workload.duration,
                        start: r.workload.start,
                        deadline: r.deadline,
                        arrivals: r.workload.arrivals,
                        mix: r.workload.mix.expect("key-value workload"),
                        bytes_per_request: r.bytes_per_request,
                        seed: 1,
                    },
                    http: http_spec(),
                    raft: raft_spec(),
                }
            }
            System::Http => {
                let h = HttpClusterConfig::desk(GcMode::Blade, SimTime::from_secs(360), 1);
                ScenarioConfig {
                    system,
                    gc_mode: GcMode::Blade,
                    runs: 1,
                    nodes: h.backends,
                    network: h.network,
                    runtime: h.runtime.clone(),
                    workload: WorkloadSpec {
                        rate_per_sec: h.workload.rate_per_sec,
                        duration: h.workload.duration,
                        start: h.workload.start,
                        deadline: h.deadline,
                        arrivals: h.workload.arrivals,
                        mix: RequestMix::interleaved(3, 1),
                        bytes_per_request: h.bytes_per_request,
                        seed: 1,
                    },
                    http: http_spec(),
                    raft: raft_spec(),
                }
            }
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::resolve(raw)
    }

    fn resolve(raw: RawScenario) -> Result<Self, ScenarioError> {
        let system = raw.system.unwrap_or(System::Raft);
        let d = Self::defaults(system);

        let t = raw.topology.unwrap_or_default();
        let nodes = t.nodes.unwrap_or(d.nodes);
        if nodes == 0 {
            return Err(invalid("topology.nodes", "must be at least 1"));
        }
        let rtt = t.rtt_us.map_or(d.network.rtt(), SimTime::from_micros);
        if !rtt.as_micros().is_multiple_of(2) {
            return Err(invalid("topology.rtt_us", "must be even (one-way delay is half)"));
        }
        let mut network = NetworkModel::from_rtt(rtt);
        let jitter = t.jitter_us.map_or(d.network.jitter, |j| {
            (j > 0).then_some(SimTime::from_micros(j))
        });
        if let Some(j) = jitter {
            network = network.with_jitter(j);
        }

        let r = raw.runtime.unwrap_or_default();
        let dr = &d.runtime;
        let runtime = RuntimeConfig {
            live_bytes: r.live_mib.map_or(Ok(dr.live_bytes), |v| mib("runtime.live_mib", v))?,
            trigger_bytes: r
                .trigger_mib
                .map_or(Ok(dr.trigger_bytes), |v| mib("runtime.trigger_mib", v))?,
            hard_limit_bytes: r
                .hard_limit_mib
                .map_or(Ok(dr.hard_limit_bytes), |v| mib("runtime.hard_limit_mib", v))?,
            low_water_bytes: r
                .low_water_mib
                .map_or(Ok(dr.low_water_bytes), |v| mib("runtime.low_water_mib", v))?,
            cost: CollectorCostModel::new(
                r.pause_per_gib_ms
                    .map_or(Ok(dr.cost.pause_per_gb), |v| ms("runtime.pause_per_gib_ms", v))?,
                r.fixed_overhead_ms
                    .map_or(Ok(dr.cost.fixed_overhead), |v| ms("runtime.fixed_overhead_ms", v))?,
            ),
            default_pause: r
                .default_pause_ms
                .map_or(Ok(dr.default_pause), |v| ms("runtime.default_pause_ms", v))?,
            defer_threshold: r
                .defer_threshold_ms
                .map_or(Ok(dr.defer_threshold), |v| ms("runtime.defer_threshold_ms", v))?,
            gc_off_penalty: r.gc_off_penalty.unwrap_or(dr.gc_off_penalty),
        };
        if runtime.live_bytes == 0 {
            return Err(invalid("runtime.live_mib", "must be positive"));
        }
        if runtime.trigger_bytes <= runtime.live_bytes {
            return Err(invalid("runtime.trigger_mib", "must exceed runtime.live_mib"));
        }
        if runtime.trigger_bytes + runtime.low_water_bytes > runtime.hard_limit_bytes {
            return Err(invalid(
                "runtime.low_water_mib",
                "trigger plus low-water mark exceeds runtime.hard_limit_mib",
            ));
        }
        if !runtime.gc_off_penalty.is_finite() || runtime.gc_off_penalty < 0.0 {
            return Err(invalid("runtime.gc_off_penalty", "must be a non-negative number"));
        }

        let w = raw.workload.unwrap_or_default();
        let dw = &d.workload;
        let rate = w.rate.unwrap_or(dw.rate_per_sec);
        if !rate.is_finite() || rate <= 0.0 {
            return Err(invalid("workload.rate", format!("must be positive, got {rate}")));
        }
        let duration = match w.duration_s {
            Some(v) => positive_ms("workload.duration_s", v * 1000.0)?,
            None => dw.duration,
        };
        let start = w.start_ms.map_or(Ok(dw.start), |v| ms("workload.start_ms", v))?;
        let deadline = match w.deadline_s {
            Some(v) => positive_ms("workload.deadline_s", v * 1000.0)?,
            None => start + duration + SimTime::from_secs(1),
        };
        let mix = RequestMix {
            gets: w.gets.unwrap_or(dw.mix.gets),
            sets: w.sets.unwrap_or(dw.mix.sets),
            order: w.mix_order.unwrap_or(dw.mix.order),
        };
        if mix.gets + mix.sets == 0 {
            return Err(invalid("workload.gets", "gets and sets cannot both be zero"));
        }
        let workload = WorkloadSpec {
            rate_per_sec: rate,
            duration,
            start,
            deadline,
            arrivals: w.arrivals.unwrap_or(dw.arrivals),
            mix,
            bytes_per_request: w.bytes_per_request.unwrap_or(dw.bytes_per_request),
            seed: w.seed.unwrap_or(dw.seed),
        };

        let h = raw.http.unwrap_or_default();
        let http = HttpSpec {
            service_time: h.service_us.map_or(d.http.service_time, SimTime::from_micros),
            parallelism: h.parallelism.unwrap_or(d.http.parallelism),
            max_concurrent: h.max_concurrent.unwrap_or(d.http.max_concurrent),
            background_bytes_per_sec: h
                .background_bytes_per_sec
                .unwrap_or(d.http.background_bytes_per_sec),
        };
        if http.parallelism == 0 {
            return Err(invalid("http.parallelism", "must be at least 1"));
        }
        if http.max_concurrent == 0 {
            return Err(invalid("http.max_concurrent", "must be at least 1"));
        }

        let rf = raw.raft.unwrap_or_default();
        let dr = &d.raft;
        let faults = match rf.faults {
            None => None,
            Some(f) => {
                let mean = positive_ms(
                    "raft.faults.mean_interval_ms",
                    f.mean_interval_ms
                        .ok_or_else(|| invalid("raft.faults.mean_interval_ms", "is required"))?,
                )?;
                let min = ms("raft.faults.min_pause_ms", f.min_pause_ms.unwrap_or(50.0))?;
                let max = ms("raft.faults.max_pause_ms", f.max_pause_ms.unwrap_or(500.0))?;
                if min > max {
                    return Err(invalid(
                        "raft.faults.min_pause_ms",
                        "must not exceed raft.faults.max_pause_ms",
                    ));
                }
                Some(LeaderFaults {
                    mean_interval: mean,
                    min_pause: min,
                    max_pause: max,
                })
            }
        };
        let raft = RaftSpec {
            service_time: rf.service_us.map_or(dr.service_time, SimTime::from_micros),
            heartbeat: rf
                .heartbeat_ms
                .map_or(Ok(dr.heartbeat), |v| positive_ms("raft.heartbeat_ms", v))?,
            election_timeout_min: rf.election_timeout_min_ms.map_or(Ok(dr.election_timeout_min), |v| {
                positive_ms("raft.election_timeout_min_ms", v)
            })?,
            election_timeout_max: rf.election_timeout_max_ms.map_or(Ok(dr.election_timeout_max), |v| {
                positive_ms("raft.election_timeout_max_ms", v)
            })?,
            client_mode: match rf.client_mode {
                None => dr.client_mode,
                Some(ClientModeSpec::Proxy) => ClientMode::Proxy,
                Some(ClientModeSpec::Retry) => ClientMode::Retry,
            },
            client_delay: rf.client_delay_us.map_or(dr.client_delay, SimTime::from_micros),
            client_timeout: rf
                .client_timeout_ms
                .map_or(Ok(dr.client_timeout), |v| positive_ms("raft.client_timeout_ms", v))?,
            t_proxy: rf.t_proxy_us.map_or(dr.t_proxy, SimTime::from_micros),
            grant_timeout_factor: rf.grant_timeout_factor.unwrap_or(dr.grant_timeout_factor),
            bootstrap_leader: rf.bootstrap_leader.unwrap_or(dr.bootstrap_leader),
            faults,
        };
        if raft.election_timeout_min > raft.election_timeout_max {
            return Err(invalid(
                "raft.election_timeout_min_ms",
                "must not exceed raft.election_timeout_max_ms",
            ));
        }
        if raft.heartbeat >= raft.election_timeout_min {
            return Err(invalid(
                "raft.heartbeat_ms",
                "must be shorter than raft.election_timeout_min_ms",
            ));
        }
        if raft.grant_timeout_factor == 0 {
            return Err(invalid("raft.grant_timeout_factor", "must be at least 1"));
        }

        let runs = raw.runs.unwrap_or(d.runs);
        if runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }

        Ok(ScenarioConfig {
            system,
            gc_mode: raw.gc_mode.unwrap_or(d.gc_mode),
            runs,
            nodes,
            network,
            runtime,
            workload,
            http,
            raft,
        })
    }

    /// Writes every setting out explicitly. Only the section for the
    /// scenario's own system is included.
    pub fn to_toml(&self) -> String {
        let r = &self.runtime;
        let w = &self.workload;
        let raw = RawScenario {
            system: Some(self.system),
            gc_mode: Some(self.gc_mode),
            runs: Some(self.runs),
            topology: Some(RawTopology {
                nodes: Some(self.nodes),
                rtt_us: Some(self.network.rtt().as_micros()),
                jitter_us: Some(self.network.jitter.map_or(0, |j| j.as_micros())),
            }),
            runtime: Some(RawRuntime {
                live_mib: Some(to_mib(r.live_bytes)),
                trigger_mib: Some(to_mib(r.trigger_bytes)),
                hard_limit_mib: Some(to_mib(r.hard_limit_bytes)),
                low_water_mib: Some(to_mib(r.low_water_bytes)),
                pause_per_gib_ms: Some(to_ms(r.cost.pause_per_gb)),
                fixed_overhead_ms: Some(to_ms(r.cost.fixed_overhead)),
                default_pause_ms: Some(to_ms(r.default_pause)),
                defer_threshold_ms: Some(to_ms(r.defer_threshold)),
                gc_off_penalty: Some(r.gc_off_penalty),
            }),
            workload: Some(RawWorkload {
                rate: Some(w.rate_per_sec),
                duration_s: Some(to_ms(w.duration) / 1000.0),
                start_ms: Some(to_ms(w.start)),
                deadline_s: Some(to_ms(w.deadline) / 1000.0),
                arrivals: Some(w.arrivals),
                gets: Some(w.mix.gets),
                sets: Some(w.mix.sets),
                mix_order: Some(w.mix.order),
                bytes_per_request: Some(w.bytes_per_request),
                seed: Some(w.seed),
            }),
            http: (self.system == System::Http).then(|| RawHttp {
                service_us: Some(self.http.service_time.as_micros()),
                parallelism: Some(self.http.parallelism),
                max_concurrent: Some(self.http.max_concurrent),
                background_bytes_per_sec: Some(self.http.background_bytes_per_sec),
            }),
            raft: (self.system == System::Raft).then(|| {
                let f = &self.raft;
                RawRaft {
                    service_us: Some(f.service_time.as_micros()),
                    heartbeat_ms: Some(to_ms(f.heartbeat)),
                    election_timeout_min_ms: Some(to_ms(f.election_timeout_min)),
                    election_timeout_max_ms: Some(to_ms(f.election_timeout_max)),
                    client_mode: Some(match f.client_mode {
                        ClientMode::Proxy => ClientModeSpec::Proxy,
                        ClientMode::Retry => ClientModeSpec::Retry,
                    }),
                    client_delay_us: Some(f.client_delay.as_micros()),
                    client_timeout_ms: Some(to_ms(f.client_timeout)),
                    t_proxy_us: Some(f.t_proxy.as_micros()),
                    grant_timeout_factor: Some(f.grant_timeout_factor),
                    bootstrap_leader: Some(f.bootstrap_leader),
                    faults: f.faults.map(|x| RawFaults {
                        mean_interval_ms: Some(to_ms(x.mean_interval)),
                        min_pause_ms: Some(to_ms(x.min_pause)),
                        max_pause_ms: Some(to_ms(x.max_pause)),
                    }),
                }
            }),
        };
        toml::to_string(&raw).expect("scenario serialises")
    }

    fn workload_config(&self, seed: u64) -> WorkloadConfig {
        let w = &self.workload;
        WorkloadConfig {
            rate_per_sec: w.rate_per_sec,
            start: w.start,
            duration: w.duration,
            arrivals: w.arrivals,
            mix: (self.system == System::Raft).then_some(w.mix),
            seed,
        }
    }

    /// Cluster settings for repetition `run` under `mode`.
    pub fn http_cluster(&self, mode: GcMode, run: u32) -> HttpClusterConfig {
        let seed = self.workload.seed.wrapping_add(run as u64);
        HttpClusterConfig {
            backends: self.nodes,
            network: self.network,
            service_time: self.http.service_time,
            parallelism: self.http.parallelism,
            mode,
            max_concurrent: self.http.max_concurrent,
            runtime: self.runtime.clone(),
            bytes_per_request: self.workload.bytes_per_request,
            background_bytes_per_sec: self.http.background_bytes_per_sec,
            workload: self.workload_config(seed),
            seed,
            deadline: self.workload.deadline,
        }
    }

    pub fn raft_cluster(&self, mode: GcMode, run: u32) -> RaftClusterConfig {
        let seed = self.workload.seed.wrapping_add(run as u64);
        let f = &self.raft;
        RaftClusterConfig {
            servers: self.nodes,
            network: self.network,
            client_delay: f.client_delay,
            service_time: f.service_time,
            mode,
            runtime: self.runtime.clone(),
            bytes_per_request: self.workload.bytes_per_request,
            heartbeat: f.heartbeat,
            election_timeout_min: f.election_timeout_min,
            election_timeout_max: f.election_timeout_max,
            client_mode: f.client_mode,
            t_proxy: f.t_proxy,
            grant_timeout_factor: f.grant_timeout_factor,
            client_timeout: f.client_timeout,
            bootstrap_leader: f.bootstrap_leader,
            leader_faults: f.faults,
            workload: self.workload_config(seed),
            seed,
            deadline: self.workload.deadline,
        }
    }
}
