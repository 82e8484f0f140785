use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::sim::SimTime;

use super::{
    overlap_count, percentiles, CollectionInterval, LatencySample, MetricsError, OverlapStat,
    PercentileReport, QUANTILES,
};

/// Everything a finished simulation run contributes to a report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Configuration label, e.g. `gc-on`.
    pub label: String,
    pub run: u32,
    pub samples: Vec<LatencySample>,
    /// Requests issued but not answered by the deadline.
    pub in_flight: usize,
    pub collections: Vec<CollectionInterval>,
}

impl RunResult {
    pub fn report(&self) -> Result<PercentileReport, MetricsError> {
        percentiles(&self.samples)
    }

    pub fn overlap(&self) -> OverlapStat {
        overlap_count(&self.collections)
    }

    pub fn max_latency(&self) -> Option<SimTime> {
        self.samples.iter().map(LatencySample::latency).max()
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    /// Run index, or `avg` for the across-run aggregate.
    pub run: String,
    pub requests: usize,
    pub in_flight: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub stddev_ms: f64,
    pub max_ms: f64,
    pub quantiles_ms: [f64; 6],
    pub overlap: OverlapStat,
}

fn ms(t: SimTime) -> f64 {
    t.as_millis_f64()
}

impl SummaryRow {
    fn from_run(r: &RunResult) -> Result<Self, MetricsError> {
        let rep = r.report()?;
        Ok(SummaryRow {
            label: r.label.clone(),
            run: r.run.to_string(),
            requests: rep.count,
            in_flight: r.in_flight,
            mean_ms: rep.mean_us / 1_000.0,
            median_ms: ms(rep.median),
            stddev_ms: rep.stddev_us / 1_000.0,
            max_ms: ms(rep.max),
            quantiles_ms: rep.quantiles.map(ms),
            overlap: r.overlap(),
        })
    }

    /// Averages every statistic across runs except `max`, which takes the
    /// maximum of the per-run maxima.
    fn aggregate(label: &str, rows: &[SummaryRow]) -> SummaryRow {
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&SummaryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mut quantiles_ms = [0.0; 6];
        for (i, q) in quantiles_ms.iter_mut().enumerate() {
            *q = avg(&|r| r.quantiles_ms[i]);
        }
        SummaryRow {
            label: label.to_string(),
            run: "avg".to_string(),
            requests: rows.iter().map(|r| r.requests).sum(),
            in_flight: rows.iter().map(|r| r.in_flight).sum(),
            mean_ms: avg(&|r| r.mean_ms),
            median_ms: avg(&|r| r.median_ms),
            stddev_ms: avg(&|r| r.stddev_ms),
            max_ms: rows.iter().map(|r| r.max_ms).fold(0.0, f64::max),
            quantiles_ms,
            overlap: OverlapStat {
                total_collections: rows.iter().map(|r| r.overlap.total_collections).sum(),
                overlapping_collections: rows
                    .iter()
                    .map(|r| r.overlap.overlapping_collections)
                    .sum(),
            },
        }
    }
}

/// Per-run rows, plus an aggregate row for every label that has more than
/// one run.
pub fn summary_rows(results: &[RunResult]) -> Result<Vec<SummaryRow>, MetricsError> {
    let mut rows = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    for r in results {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    for label in labels {
        let per_run = results
            .iter()
            .filter(|r| r.label == label)
            .map(SummaryRow::from_run)
            .collect::<Result<Vec<_>, _>>()?;
        let agg = (per_run.len() > 1).then(|| SummaryRow::aggregate(label, &per_run));
        rows.extend(per_run);
        rows.extend(agg);
    }
    Ok(rows)
}

pub fn write_table(path: &Path, rows: &[SummaryRow]) -> Result<(), MetricsError> {
    let file = File::create(path).map_err(|e| MetricsError::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# times in ms; quantiles use the nearest-rank definition")
        .map_err(|e| MetricsError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "config".to_string(),
        "run".into(),
        "requests".into(),
        "in_flight".into(),
        "mean".into(),
        "median".into(),
        "stddev".into(),
        "max".into(),
    ];
    header.extend(QUANTILES.iter().map(|q| format!("p{}", q.label)));
    header.extend(["collections".to_string(), "overlapping".into()]);
    w.write_record(&header).map_err(|e| MetricsError::csv(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.label.clone(),
            r.run.clone(),
            r.requests.to_string(),
            r.in_flight.to_string(),
            format!("{:.3}", r.mean_ms),
            format!("{:.3}", r.median_ms),
            format!("{:.3}", r.stddev_ms),
            format!("{:.3}", r.max_ms),
        ];
        rec.extend(r.quantiles_ms.iter().map(|q| format!("{q:.3}")));
        rec.push(r.overlap.total_collections.to_string());
        rec.push(r.overlap.overlapping_collections.to_string());
        w.write_record(&rec).map_err(|e| MetricsError::csv(path, e))?;
    }
    w.flush().map_err(|e| MetricsError::io(path, e))?;
    Ok(())
}

/// Two whitespace-separated columns, one line per sample rank: latency in ms
/// and the cumulative fraction of samples at or below it.
pub fn write_cdf(path: &Path, samples: &[LatencySample]) -> Result<(), MetricsError> {
    let mut lat: Vec<SimTime> = samples.iter().map(LatencySample::latency).collect();
    lat.sort_unstable();
    let file = File::create(path).map_err(|e| MetricsError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let n = lat.len() as f64;
    for (i, l) in lat.iter().enumerate() {
        writeln!(out, "{:.3} {:.6}", ms(*l), (i + 1) as f64 / n)
            .map_err(|e| MetricsError::io(path, e))?;
    }
    out.flush().map_err(|e| MetricsError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub table: PathBuf,
    pub cdfs: Vec<PathBuf>,
}

/// Writes `summary.csv` plus one `cdf-<label>[-run<k>].txt` per run into `dir`.
pub fn emit_report(dir: &Path, results: &[RunResult]) -> Result<ReportFiles, MetricsError> {
    fs::create_dir_all(dir).map_err(|e| MetricsError::io(dir, e))?;
    let table = dir.join("summary.csv");
    write_table(&table, &summary_rows(results)?)?;
    let multi_run = results.iter().any(|r| r.run > 0);
    let mut cdfs = Vec::with_capacity(results.len());
    for r in results {
        let name = if multi_run {
            format!("cdf-{}-run{}.txt", r.label, r.run)
        } else {
            format!("cdf-{}.txt", r.label)
        };
        let path = dir.join(name);
        write_cdf(&path, &r.samples)?;
        cdfs.push(path);
    }
    Ok(ReportFiles { table, cdfs })
}
