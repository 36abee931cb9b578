use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BenchmarkRow, MetricTrajectory};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, HotspotScore, MetricReport};
use crate::observations::{
    create, csv_error, csv_reader, io_err, malformed, parse_f64, SpeciesIndex,
};

pub const TRAJECTORY_HEADER: [&str; 9] = [
    "strategy",
    "seed",
    "t",
    "mae",
    "mse",
    "top10",
    "top30",
    "topk",
    "n_hotspots",
];
pub const SPECIES_TRAJECTORY_HEADER: [&str; 3] = ["species_id", "t", "mae"];
pub const BENCHMARK_HEADER: [&str; 15] = [
    "strategy",
    "column",
    "t",
    "mae",
    "mae_sd",
    "mse",
    "mse_sd",
    "top10",
    "top10_sd",
    "top30",
    "top30_sd",
    "topk",
    "topk_sd",
    "n_runs",
    "n_hotspots",
];
pub const SWEEP_HEADER: [&str; 10] = [
    "lambda",
    "strategy",
    "seed",
    "t",
    "mae",
    "mse",
    "top10",
    "top30",
    "topk",
    "n_hotspots",
];

fn writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn finish(path: &Path, mut w: csv::Writer<std::io::BufWriter<std::fs::File>>) -> Result<()> {
    w.flush().map_err(io_err(path))?;
    let inner = w.into_inner().map_err(|e| io_err(path)(e.into_error()))?;
    inner
        .into_inner()
        .map_err(|e| io_err(path)(e.into_error()))?
        .flush()
        .map_err(io_err(path))
}

fn score_fields(s: &HotspotScore) -> impl Iterator<Item = String> {
    s.values().into_iter().map(|v| v.to_string())
}

fn trajectory_rows<'a>(
    prefix: &'a [String],
    strategy: &'a str,
    traj: &'a MetricTrajectory,
) -> impl Iterator<Item = Vec<String>> + 'a {
    traj.runs.iter().flat_map(move |run| {
        run.steps.iter().enumerate().map(move |(t, s)| {
            let mut rec = prefix.to_vec();
            rec.extend([strategy.to_string(), run.seed.to_string(), t.to_string()]);
            rec.extend(score_fields(s));
            rec.push(run.n_hotspots.to_string());
            rec
        })
    })
}

/// One row per (strategy, seed, step) with hotspot-averaged metrics.
pub fn write_trajectory_csv(path: &Path, results: &[(&str, &MetricTrajectory)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRAJECTORY_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (name, traj) in results {
        for rec in trajectory_rows(&[], name, traj) {
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}

/// Per-species MAE by step, averaged over hotspots and runs.
pub fn write_species_trajectory_csv(
    path: &Path,
    species: &SpeciesIndex,
    traj: &MetricTrajectory,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SPECIES_TRAJECTORY_HEADER)
        .map_err(|e| csv_error(path, e))?;
    let by_step = traj.species_mae();
    for (i, name) in species.names().iter().enumerate() {
        for (t, row) in by_step.iter().enumerate() {
            w.write_record([name.clone(), t.to_string(), row[i].to_string()])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}

pub fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BENCHMARK_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        let mut rec = vec![
            row.strategy.name().to_string(),
            row.column.label().to_string(),
            row.column.t().to_string(),
        ];
        for (m, sd) in row
            .report
            .mean
            .values()
            .into_iter()
            .zip(row.report.sd_runs.values())
        {
            rec.push(m.to_string());
            rec.push(sd.to_string());
        }
        rec.push(row.report.n_runs.to_string());
        rec.push(row.report.n_hotspots.to_string());
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// Trajectories of a blend sweep; the unblended baseline has lambda `none`.
pub fn write_sweep_csv(
    path: &Path,
    strategy: &str,
    sweep: &[(Option<f64>, MetricTrajectory)],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (lambda, traj) in sweep {
        let label = [lambda.map_or_else(|| "none".to_string(), |l| l.to_string())];
        for rec in trajectory_rows(&label, strategy, traj) {
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub strategy: String,
    pub seed: u64,
    pub t: usize,
    pub score: HotspotScore,
    pub n_hotspots: usize,
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != TRAJECTORY_HEADER.len()
        || headers.iter().zip(TRAJECTORY_HEADER).any(|(a, b)| a != b)
    {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`", TRAJECTORY_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |i: usize, what: &str| {
            rec[i]
                .parse::<u64>()
                .map_err(|_| malformed(path, line, format!("invalid {what} `{}`", &rec[i])))
        };
        let mut v = [0.0; 5];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = parse_f64(path, line, &rec[3 + j], TRAJECTORY_HEADER[3 + j])?;
        }
        rows.push(TrajectoryRow {
            strategy: rec[0].to_string(),
            seed: int(1, "seed")?,
            t: int(2, "t")? as usize,
            score: HotspotScore::from_values(v),
            n_hotspots: int(8, "n_hotspots")? as usize,
        });
    }
    Ok(rows)
}

/// Cross-seed summary of one strategy at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub t: usize,
    pub report: MetricReport,
    /// Input files that lack this strategy entirely.
    pub missing_from: Vec<PathBuf>,
}

/// Merges trajectory files and recomputes cross-seed means and sample
/// standard deviations. Strategies are the union over files, in order of
/// first appearance; files lacking a strategy are listed on its rows. A
/// `(strategy, seed, t)` triple seen twice is rejected.
pub fn summarize_trajectories(files: &[(PathBuf, Vec<TrajectoryRow>)]) -> Result<Vec<SummaryRow>> {
    let mut order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), BTreeMap<u64, &TrajectoryRow>> = BTreeMap::new();
    for (_, rows) in files {
        for row in rows {
            let k = match order.iter().position(|s| *s == row.strategy) {
                Some(k) => k,
                None => {
                    order.push(row.strategy.clone());
                    order.len() - 1
                }
            };
            if cells
                .entry((k, row.t))
                .or_default()
                .insert(row.seed, row)
                .is_some()
            {
                return Err(Error::Duplicate {
                    kind: "trajectory row",
                    id: format!("{},{},{}", row.strategy, row.seed, row.t),
                });
            }
        }
    }
    cells
        .into_iter()
        .map(|((k, t), by_seed)| {
            let scores: Vec<HotspotScore> = by_seed.values().map(|r| r.score).collect();
            let n_hotspots = by_seed.values().map(|r| r.n_hotspots).max().unwrap_or(0);
            let missing_from = files
                .iter()
                .filter(|(_, rows)| rows.iter().all(|r| r.strategy != order[k]))
                .map(|(p, _)| p.clone())
                .collect();
            Ok(SummaryRow {
                strategy: order[k].clone(),
                t,
                report: aggregate_runs(&scores, n_hotspots)?,
                missing_from,
            })
        })
        .collect()
}
