//! Scenario files and the drivers that turn them into runs and reports.
//!
//! A scenario is a TOML file; every key is optional and falls back to the
//! defaults of its `system`. See the repository README for the schema.

mod config;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ClientModeSpec, HttpSpec, RaftSpec, ScenarioConfig, System, WorkloadSpec};

use crate::http::HttpCluster;
use crate::metrics::{emit_report, summary_rows, write_table, MetricsError, ReportFiles, RunResult};
use crate::raft::RaftCluster;
use crate::runtime::RuntimeError;
use crate::GcMode;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Runs every repetition of `cfg` under `mode`.
pub fn run_scenario(cfg: &ScenarioConfig, mode: GcMode) -> Result<Vec<RunResult>, ScenarioError> {
    (0..cfg.runs)
        .map(|k| -> Result<RunResult, ScenarioError> {
            Ok(match cfg.system {
                System::Http => HttpCluster::new(cfg.http_cluster(mode, k))?
                    .run()
                    .into_run_result(k),
                System::Raft => RaftCluster::new(cfg.raft_cluster(mode, k))?
                    .run()
                    .into_run_result(k),
            })
        })
        .collect()
}

/// Runs the same scenario under GC-Off, Blade and GC-On, in parallel.
pub fn run_compare(cfg: &ScenarioConfig) -> Result<Vec<(GcMode, Vec<RunResult>)>, ScenarioError> {
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = GcMode::ALL
            .iter()
            .map(|&mode| s.spawn(move || (mode, run_scenario(cfg, mode))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    results
        .into_iter()
        .map(|(mode, r)| r.map(|r| (mode, r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompareFiles {
    pub per_mode: Vec<(GcMode, ReportFiles)>,
    pub comparison: PathBuf,
}

/// Writes `<dir>/<mode>/` reports for each mode and a combined
/// `<dir>/comparison.csv`.
pub fn write_compare(dir: &Path, results: &[(GcMode, Vec<RunResult>)]) -> Result<CompareFiles, ScenarioError> {
    let mut per_mode = Vec::new();
    let mut all = Vec::new();
    for (mode, runs) in results {
        per_mode.push((*mode, emit_report(&dir.join(mode.label()), runs)?));
        all.extend(runs.iter().cloned());
    }
    let comparison = dir.join("comparison.csv");
    write_table(&comparison, &summary_rows(&all)?)?;
    Ok(CompareFiles {
        per_mode,
        comparison,
    })
}
