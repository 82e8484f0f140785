use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Get,
    Set,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Evenly spaced arrivals.
    Uniform,
    /// Exponential inter-arrival gaps drawn from a seeded source.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixOrder {
    /// `gets` gets then `sets` sets, repeating.
    Interleaved,
    /// Each request independently a get with probability gets/(gets+sets).
    Random,
}

/// Read/write ratio for key-value workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMix {
    pub gets: u32,
    pub sets: u32,
    pub order: MixOrder,
}

impl RequestMix {
    pub fn interleaved(gets: u32, sets: u32) -> Self {
        RequestMix {
            gets,
            sets,
            order: MixOrder::Interleaved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub rate_per_sec: f64,
    pub start: SimTime,
    pub duration: SimTime,
    pub arrivals: ArrivalProcess,
    /// `None` generates plain HTTP requests.
    pub mix: Option<RequestMix>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub id: u64,
    pub at: SimTime,
    pub kind: RequestKind,
}

/// Open-loop arrival stream. Finite: stops at `start + duration`.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    cfg: WorkloadConfig,
    next_id: u64,
    elapsed_secs: f64,
    gap: Option<Exp<f64>>,
    rng: ChaCha8Rng,
}

const WORKLOAD_STREAM: u64 = 0x776f_726b_6c6f_6164;

/// Builds the arrival stream for `cfg`. Identical configs (seed included)
/// produce identical streams.
pub fn generate_workload(cfg: &WorkloadConfig) -> ArrivalStream {
    assert!(
        cfg.rate_per_sec.is_finite() && cfg.rate_per_sec > 0.0,
        "arrival rate must be positive"
    );
    let gap = match cfg.arrivals {
        ArrivalProcess::Uniform => None,
        ArrivalProcess::Poisson => Some(Exp::new(cfg.rate_per_sec).expect("positive rate")),
    };
    ArrivalStream {
        cfg: cfg.clone(),
        next_id: 0,
        elapsed_secs: 0.0,
        gap,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ WORKLOAD_STREAM),
    }
}

impl ArrivalStream {
    fn kind_for(&mut self, id: u64) -> RequestKind {
        let Some(mix) = self.cfg.mix else {
            return RequestKind::Http;
        };
        let period = u64::from(mix.gets + mix.sets);
        match mix.order {
            MixOrder::Interleaved => {
                if id % period < u64::from(mix.gets) {
                    RequestKind::Get
                } else {
                    RequestKind::Set
                }
            }
            MixOrder::Random => {
                if self.rng.random_range(0..period) < u64::from(mix.gets) {
                    RequestKind::Get
                } else {
                    RequestKind::Set
                }
            }
        }
    }
}

impl Iterator for ArrivalStream {
    type Item = Arrival;

    fn next(&mut self) -> Option<Arrival> {
        let offset = match self.gap {
            None => {
                let us = (self.next_id as f64 * 1e6 / self.cfg.rate_per_sec).floor();
                SimTime::from_micros(us as u64)
            }
            Some(exp) => {
                self.elapsed_secs += exp.sample(&mut self.rng);
                SimTime::from_micros((self.elapsed_secs * 1e6).floor() as u64)
            }
        };
        if offset >= self.cfg.duration {
            return None;
        }
        let id = self.next_id;
        self.next_id += 1;
        let kind = self.kind_for(id);
        Some(Arrival {
            id,
            at: self.cfg.start + offset,
            kind,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rate: f64, secs: u64) -> WorkloadConfig {
        WorkloadConfig {
            rate_per_sec: rate,
            start: SimTime::ZERO,
            duration: SimTime::from_secs(secs),
            arrivals: ArrivalProcess::Uniform,
            mix: Some(RequestMix::interleaved(3, 1)),
            seed: 1,
        }
    }

    #[test]
    fn uniform_spacing() {
        let all: Vec<_> = generate_workload(&cfg(100.0, 10)).collect();
        assert_eq!(all.len(), 1000);
        for (i, a) in all.iter().enumerate() {
            assert_eq!(a.at, SimTime::from_millis(10 * i as u64));
            assert_eq!(a.id, i as u64);
        }
    }

    #[test]
    fn three_to_one_interleave() {
        let kinds: Vec<_> = generate_workload(&cfg(100.0, 1)).take(8).map(|a| a.kind).collect();
        use RequestKind::*;
        assert_eq!(kinds, [Get, Get, Get, Set, Get, Get, Get, Set]);
    }

    #[test]
    fn fractional_spacing_floors() {
        let mut c = cfg(6000.0, 1);
        c.mix = None;
        let all: Vec<_> = generate_workload(&c).collect();
        assert_eq!(all.len(), 6000);
        assert_eq!(all[1].at.as_micros(), 166);
        assert_eq!(all[2].at.as_micros(), 333);
        assert!(all.iter().all(|a| a.kind == RequestKind::Http));
    }

    #[test]
    fn seeded_poisson_is_reproducible() {
        let mut c = cfg(250.0, 20);
        c.arrivals = ArrivalProcess::Poisson;
        c.mix = Some(RequestMix {
            gets: 3,
            sets: 1,
            order: MixOrder::Random,
        });
        let a: Vec<_> = generate_workload(&c).collect();
        let b: Vec<_> = generate_workload(&c).collect();
        assert_eq!(a, b);
        // 5000 expected; well inside six standard deviations.
        assert!((4_550..=5_450).contains(&a.len()), "{}", a.len());
        assert!(a.windows(2).all(|w| w[0].at <= w[1].at));
        c.seed = 2;
        let other: Vec<_> = generate_workload(&c).collect();
        assert_ne!(a, other);
    }
}
