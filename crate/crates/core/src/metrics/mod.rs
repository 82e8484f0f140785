//! Workload generation, latency statistics, collection-overlap accounting and
//! report files.

mod overlap;
mod report;
mod stats;
mod workload;

pub use overlap::{overlap_count, CollectionInterval, OverlapStat};
pub use report::{emit_report, summary_rows, write_cdf, write_table, ReportFiles, RunResult, SummaryRow};
pub use stats::{percentiles, percentiles_of, LatencySample, PercentileReport, QuantileLevel, MEDIAN, QUANTILES};
pub use workload::{
    generate_workload, Arrival, ArrivalProcess, ArrivalStream, MixOrder, RequestKind, RequestMix,
    WorkloadConfig,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no latency samples to summarise")]
    NoSamples,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl MetricsError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        MetricsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        MetricsError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl PartialEq for MetricsError {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (MetricsError::NoSamples, MetricsError::NoSamples) => true,
            (MetricsError::Io { path: a, .. }, MetricsError::Io { path: b, .. }) => a == b,
            (MetricsError::Csv { path: a, .. }, MetricsError::Csv { path: b, .. }) => a == b,
            _ => false,
        }
    }
}
