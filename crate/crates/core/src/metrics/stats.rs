use serde::{Deserialize, Serialize};

use crate::sim::{NodeId, SimTime};

use super::{MetricsError, RequestKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub request_id: u64,
    pub issued_at: SimTime,
    pub completed_at: SimTime,
    pub server: NodeId,
    pub kind: RequestKind,
}

impl LatencySample {
    pub fn latency(&self) -> SimTime {
        self.completed_at - self.issued_at
    }
}

/// A quantile level as an exact fraction, so nearest-rank indices are
/// computed in integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantileLevel {
    pub label: &'static str,
    pub num: u64,
    pub den: u64,
}

impl QuantileLevel {
    /// Nearest-rank: the smallest rank r (1-based) with r/n >= level.
    pub fn rank(&self, n: usize) -> usize {
        let n = n as u128;
        let r = (u128::from(self.num) * n).div_ceil(u128::from(self.den));
        r.max(1) as usize
    }
}

pub const MEDIAN: QuantileLevel = QuantileLevel {
    label: "50",
    num: 1,
    den: 2,
};

pub const QUANTILES: [QuantileLevel; 6] = [
    QuantileLevel { label: "95", num: 95, den: 100 },
    QuantileLevel { label: "99", num: 99, den: 100 },
    QuantileLevel { label: "99.9", num: 999, den: 1_000 },
    QuantileLevel { label: "99.99", num: 9_999, den: 10_000 },
    QuantileLevel { label: "99.999", num: 99_999, den: 100_000 },
    QuantileLevel { label: "99.9999", num: 999_999, den: 1_000_000 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileReport {
    pub count: usize,
    /// Exact mean in microseconds.
    pub mean_us: f64,
    /// Population standard deviation in microseconds.
    pub stddev_us: f64,
    pub median: SimTime,
    pub max: SimTime,
    /// Values at [`QUANTILES`], same order.
    pub quantiles: [SimTime; 6],
}

impl PercentileReport {
    pub fn quantile(&self, label: &str) -> Option<SimTime> {
        QUANTILES
            .iter()
            .position(|q| q.label == label)
            .map(|i| self.quantiles[i])
    }

    pub fn p999(&self) -> SimTime {
        self.quantiles[2]
    }

    pub fn p999999(&self) -> SimTime {
        self.quantiles[5]
    }
}

pub fn percentiles(samples: &[LatencySample]) -> Result<PercentileReport, MetricsError> {
    let lat: Vec<SimTime> = samples.iter().map(LatencySample::latency).collect();
    percentiles_of(&lat)
}

/// Nearest-rank quantiles over `latencies`; mean and deviation are exact.
pub fn percentiles_of(latencies: &[SimTime]) -> Result<PercentileReport, MetricsError> {
    if latencies.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let at = |q: &QuantileLevel| sorted[q.rank(n) - 1];

    let sum: u128 = sorted.iter().map(|t| u128::from(t.as_micros())).sum();
    let mean_us = sum as f64 / n as f64;
    let var = sorted
        .iter()
        .map(|t| {
            let d = t.as_micros() as f64 - mean_us;
            d * d
        })
        .sum::<f64>()
        / n as f64;

    Ok(PercentileReport {
        count: n,
        mean_us,
        stddev_us: var.sqrt(),
        median: at(&MEDIAN),
        max: sorted[n - 1],
        quantiles: QUANTILES.map(|q| at(&q)),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    #[test]
    fn single_sample() {
        let r = percentiles_of(&[ms(5)]).unwrap();
        assert_eq!(r.median, ms(5));
        assert_eq!(r.max, ms(5));
        assert!(r.quantiles.iter().all(|&q| q == ms(5)));
        assert_eq!(r.mean_us, 5_000.0);
        assert_eq!(r.stddev_us, 0.0);
    }

    #[test]
    fn one_to_hundred() {
        let lat: Vec<_> = (1..=100).rev().map(ms).collect();
        let r = percentiles_of(&lat).unwrap();
        assert_eq!(r.quantile("99"), Some(ms(99)));
        assert_eq!(r.quantile("95"), Some(ms(95)));
        assert_eq!(r.quantile("99.9"), Some(ms(100)));
        assert_eq!(r.median, ms(50));
        assert_eq!(r.mean_us, 50_500.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(percentiles_of(&[]), Err(MetricsError::NoSamples));
    }

    #[test]
    fn extreme_level_rank() {
        let q = QUANTILES[5];
        assert_eq!(q.rank(1), 1);
        assert_eq!(q.rank(1_000_000), 999_999);
        assert_eq!(q.rank(1_000_001), 1_000_000);
    }

    // Brute-force oracle: the nearest-rank quantile is the smallest value v
    // such that at least level * n samples are <= v.
    fn oracle(values: &[u64], num: u64, den: u64) -> u64 {
        let n = values.len() as u64;
        let mut candidates = values.to_vec();
        candidates.sort_unstable();
        candidates.dedup();
        for v in candidates {
            let le = values.iter().filter(|&&x| x <= v).count() as u64;
            if le * den >= num * n {
                return v;
            }
        }
        unreachable!()
    }

    proptest! {
        #[test]
        fn quantiles_match_counting_oracle(values in prop::collection::vec(0u64..5_000, 1..400)) {
            let lat: Vec<_> = values.iter().map(|&v| SimTime::from_micros(v)).collect();
            let r = percentiles_of(&lat).unwrap();
            prop_assert_eq!(r.median.as_micros(), oracle(&values, 1, 2));
            for (q, got) in QUANTILES.iter().zip(r.quantiles) {
                prop_assert_eq!(got.as_micros(), oracle(&values, q.num, q.den));
            }
            prop_assert!(r.quantiles.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(r.max.as_micros(), *values.iter().max().unwrap());
        }
    }
}
