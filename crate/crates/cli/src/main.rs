use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pausesim::metrics::{emit_report, summary_rows, RunResult};
use pausesim::scenario::{run_compare, run_scenario, write_compare, ScenarioConfig};
use pausesim::sim::SimTime;
use pausesim::GcMode;

/// Simulate clusters that schedule their garbage collections.
#[derive(Debug, Parser)]
#[command(name = "pausesim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Base seed (run k uses seed + k).
    #[arg(long)]
    seed: Option<u64>,
    /// Stop the simulation at this many simulated seconds.
    #[arg(long)]
    deadline: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario under a single collector mode.
    Run {
        config: PathBuf,
        /// on, off or blade; defaults to the scenario's gc_mode.
        #[arg(long)]
        mode: Option<GcMode>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one scenario under GC-Off, Blade and GC-On.
    Compare {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the scenario with every default filled in.
    Config { config: PathBuf },
}

fn load(path: &Path, o: Option<&Overrides>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(o) = o {
        if let Some(seed) = o.seed {
            cfg.workload.seed = seed;
        }
        if let Some(d) = o.deadline {
            anyhow::ensure!(d.is_finite() && d > 0.0, "--deadline must be a positive number of seconds");
            cfg.workload.deadline = SimTime::from_millis_f64(d * 1000.0);
        }
    }
    Ok(cfg)
}

fn print_rows(results: &[RunResult]) -> Result<()> {
    for row in summary_rows(results)? {
        println!(
            "{:<8} {:>5} requests={} in_flight={} median={:.3}ms p99.9={:.3}ms max={:.3}ms collections={} overlapping={}",
            row.label,
            row.run,
            row.requests,
            row.in_flight,
            row.median_ms,
            row.quantiles_ms[2],
            row.max_ms,
            row.overlap.total_collections,
            row.overlap.overlapping_collections,
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            mode,
            out,
            overrides,
        } => {
            let cfg = load(&config, Some(&overrides))?;
            let mode = mode.unwrap_or(cfg.gc_mode);
            let results = run_scenario(&cfg, mode)?;
            let files = emit_report(&out, &results)?;
            print_rows(&results)?;
            println!("wrote {}", files.table.display());
        }
        Command::Compare {
            config,
            out,
            overrides,
        } => {
            let cfg = load(&config, Some(&overrides))?;
            let results = run_compare(&cfg)?;
            let files = write_compare(&out, &results)?;
            let all: Vec<_> = results.into_iter().flat_map(|(_, r)| r).collect();
            print_rows(&all)?;
            println!("wrote {}", files.comparison.display());
        }
        Command::Config { config } => {
            print!("{}", load(&config, None)?.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
