//! Per-hotspot accuracy metrics and their aggregation across runs.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("species vector"));
    }
    if let Some(&v) = pred.iter().chain(truth).find(|v| !v.is_finite()) {
        return Err(Error::param("rate", v, "must be finite"));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p).abs()).sum();
    Ok(sum / truth.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, y)| (y - p) * (y - p)).sum();
    Ok(sum / truth.len() as f64)
}

/// Indices of the `k` largest values, ties broken by ascending index.
pub fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn overlap_percent(pred: &[f64], truth: &[f64], k: usize) -> f64 {
    let mut in_truth = vec![false; truth.len()];
    for i in top_indices(truth, k) {
        in_truth[i] = true;
    }
    let hits = top_indices(pred, k)
        .into_iter()
        .filter(|&i| in_truth[i])
        .count();
    100.0 * hits as f64 / k as f64
}

/// Adaptive top-k with `k` the number of species with nonzero truth.
pub fn top_k_adaptive(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(pred, truth)?;
    let k = truth.iter().filter(|&&y| y != 0.0).count();
    if k == 0 {
        return Ok(0.0);
    }
    Ok(overlap_percent(pred, truth, k))
}

/// Top-m overlap, with `m` saturating at the number of species.
pub fn top_m(pred: &[f64], truth: &[f64], m: usize) -> Result<f64> {
    check_pair(pred, truth)?;
    if m == 0 {
        return Err(Error::param("m", 0.0, "must be >= 1"));
    }
    Ok(overlap_percent(pred, truth, m.min(truth.len())))
}

/// The five reported metrics for one prediction, or a summary of many.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HotspotScore {
    pub mae: f64,
    pub mse: f64,
    pub top10: f64,
    pub top30: f64,
    pub topk: f64,
}

impl HotspotScore {
    pub const NAMES: [&'static str; 5] = ["mae", "mse", "top10", "top30", "topk"];

    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            mae: mae(pred, truth)?,
            mse: mse(pred, truth)?,
            top10: top_m(pred, truth, 10)?,
            top30: top_m(pred, truth, 30)?,
            topk: top_k_adaptive(pred, truth)?,
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.mae, self.mse, self.top10, self.top30, self.topk]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Self {
            mae: v[0],
            mse: v[1],
            top10: v[2],
            top30: v[3],
            topk: v[4],
        }
    }

    /// Unweighted mean in the given order.
    pub fn mean_of(scores: &[HotspotScore]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("scores"));
        }
        let mut acc = [0.0; 5];
        for s in scores {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        Ok(Self::from_values(acc.map(|a| a / scores.len() as f64)))
    }
}

/// Means and spreads of the five metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mean: HotspotScore,
    /// Sample standard deviation of per-run means.
    pub sd_runs: HotspotScore,
    /// Sample standard deviation over every (run, hotspot) score.
    pub sd_hotspots: HotspotScore,
    pub n_hotspots: usize,
    pub n_runs: usize,
}

/// Sample mean and standard deviation (divisor `n - 1`, zero for one value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn spread(rows: &[HotspotScore]) -> (HotspotScore, HotspotScore) {
    let mut mean = [0.0; 5];
    let mut sd = [0.0; 5];
    for j in 0..5 {
        let column: Vec<f64> = rows.iter().map(|r| r.values()[j]).collect();
        (mean[j], sd[j]) = mean_sd(&column);
    }
    (
        HotspotScore::from_values(mean),
        HotspotScore::from_values(sd),
    )
}

/// Averages hotspot scores within each run label, then reports the mean and
/// sample standard deviation of those per-run means.
pub fn aggregate(scores: &[HotspotScore], runs: &[u64]) -> Result<MetricReport> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.len() != runs.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            found: runs.len(),
        });
    }
    let mut grouped: BTreeMap<u64, Vec<HotspotScore>> = BTreeMap::new();
    for (s, r) in scores.iter().zip(runs) {
        grouped.entry(*r).or_default().push(*s);
    }
    let run_means = grouped
        .values()
        .map(|g| HotspotScore::mean_of(g))
        .collect::<Result<Vec<_>>>()?;
    let (mean, sd_runs) = spread(&run_means);
    let (_, sd_hotspots) = spread(scores);
    let n_hotspots = grouped.values().map(Vec::len).max().unwrap_or(0);
    Ok(MetricReport {
        mean,
        sd_runs,
        sd_hotspots,
        n_hotspots,
        n_runs: grouped.len(),
    })
}

/// Mean and sample standard deviation over already-averaged run scores.
pub fn aggregate_runs(run_means: &[HotspotScore], n_hotspots: usize) -> Result<MetricReport> {
    if run_means.is_empty() {
        return Err(Error::Empty("run scores"));
    }
    let (mean, sd_runs) = spread(run_means);
    Ok(MetricReport {
        mean,
        sd_runs,
        sd_hotspots: HotspotScore::default(),
        n_hotspots,
        n_runs: run_means.len(),
    })
}
