//! Episodic evaluation: priors are moment-matched per test hotspot, absorb one
//! checklist per step, and are scored against ground truth after every step.
//!
//! For each seed and test hotspot the checklists are shuffled once. The first
//! `history_reserve` go to history-based priors, the next `updates` form the
//! update stream and the remainder is the evaluation set. Every strategy run
//! with the same seed therefore sees the same stream and evaluation set.

mod output;

pub use output::{
    read_trajectory_csv, summarize_trajectories, write_benchmark_csv, write_species_trajectory_csv,
    write_sweep_csv, write_trajectory_csv, SummaryRow, TrajectoryRow, BENCHMARK_HEADER,
    SPECIES_TRAJECTORY_HEADER, SWEEP_HEADER, TRAJECTORY_HEADER,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::beta::{blend, blend_weight, EncounterEstimate, PosteriorCell};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, HotspotScore, MetricReport};
use crate::observations::{
    checklist_rates, partition_checklists, Checklist, Dataset, HotspotRecord, Partition, Split,
    DEFAULT_MIN_EVAL,
};
use crate::priors::historical_variance_prior;
use crate::rng::{self, derive_seed, fnv1a};
use crate::synthetic::TruthTable;

/// Default number of update steps.
pub const DEFAULT_UPDATES: usize = 10;
/// Step reported in the updated column of the benchmark table.
pub const DEFAULT_BENCHMARK_STEP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    FixedVariance,
    HistoricalVariance,
    DeepEnsemble,
    ShallowEnsemble,
    McDropout,
    MeanVariance,
    HetReg,
    MeanRateStatic,
    ModelStatic,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::MeanRateStatic,
        Strategy::ModelStatic,
        Strategy::FixedVariance,
        Strategy::HistoricalVariance,
        Strategy::DeepEnsemble,
        Strategy::ShallowEnsemble,
        Strategy::McDropout,
        Strategy::MeanVariance,
        Strategy::HetReg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FixedVariance => "FV",
            Strategy::HistoricalVariance => "HV",
            Strategy::DeepEnsemble => "DE",
            Strategy::ShallowEnsemble => "SE",
            Strategy::McDropout => "MCD",
            Strategy::MeanVariance => "MVN",
            Strategy::HetReg => "HetReg",
            Strategy::MeanRateStatic => "MeanRate-static",
            Strategy::ModelStatic => "model-static",
        }
    }

    /// Static strategies carry no uncertainty and are never updated.
    pub fn is_updatable(&self) -> bool {
        !matches!(self, Strategy::MeanRateStatic | Strategy::ModelStatic)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let known: Vec<_> = Strategy::ALL.iter().map(Strategy::name).collect();
                format!(
                    "unknown strategy `{s}` (expected one of {})",
                    known.join(", ")
                )
            })
    }
}

/// Priors for every hotspot, rows aligned with `Dataset::hotspots`.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSet {
    /// Ready `(mean, variance)` beliefs.
    Beliefs(Vec<Vec<EncounterEstimate>>),
    /// Means whose variance is computed from each hotspot's reserved history.
    Historical {
        means: Vec<Vec<f64>>,
        max_history: usize,
    },
    /// Point predictions that are scored but never updated.
    Static(Vec<Vec<f64>>),
}

impl PriorSet {
    fn rows(&self) -> usize {
        match self {
            PriorSet::Beliefs(r) => r.len(),
            PriorSet::Historical { means, .. } => means.len(),
            PriorSet::Static(r) => r.len(),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, PriorSet::Static(_))
    }
}

/// Where ground truth comes from.
#[derive(Debug, Clone, Copy)]
pub enum GroundTruth<'a> {
    /// Empirical rates over each hotspot's held-out evaluation set.
    HeldOut,
    /// Known rates, e.g. from a synthetic world.
    Known(&'a TruthTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// Number of update steps `T`.
    pub updates: usize,
    pub min_eval: usize,
    /// Checklists set aside ahead of the update stream for history priors.
    pub history_reserve: usize,
    pub seeds: Vec<u64>,
    pub blend_lambda: Option<f64>,
    pub jobs: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            updates: DEFAULT_UPDATES,
            min_eval: DEFAULT_MIN_EVAL,
            history_reserve: 0,
            seeds: vec![0],
            blend_lambda: None,
            jobs: 1,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Empty("seed list"));
        }
        if let Some(l) = self.blend_lambda {
            blend_weight(l, 0)?;
        }
        if self.jobs == 0 {
            return Err(Error::param("jobs", 0.0, "must be >= 1"));
        }
        Ok(())
    }

    /// Checklists a test hotspot must carry.
    pub fn required_checklists(&self) -> usize {
        self.history_reserve + self.updates + self.min_eval.max(1)
    }
}

/// Posterior state of every species at one hotspot during an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    cells: Vec<PosteriorCell>,
    blend_lambda: Option<f64>,
    t: u64,
}

impl Episode {
    pub fn new(priors: &[EncounterEstimate], blend_lambda: Option<f64>) -> Result<Self> {
        if let Some(l) = blend_lambda {
            blend_weight(l, 0)?;
        }
        let cells = priors
            .iter()
            .map(|p| PosteriorCell::from_estimate(*p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cells,
            blend_lambda,
            t: 0,
        })
    }

    pub fn cells(&self) -> &[PosteriorCell] {
        &self.cells
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn absorb(&mut self, checklist: &Checklist) -> Result<()> {
        if checklist.detections.len() != self.cells.len() {
            return Err(Error::LengthMismatch {
                expected: self.cells.len(),
                found: checklist.detections.len(),
            });
        }
        for (cell, &d) in self.cells.iter_mut().zip(&checklist.detections) {
            *cell = cell.update_one(d);
        }
        self.t += 1;
        Ok(())
    }

    /// Prior means at `t = 0`; afterwards posterior point estimates, blended
    /// with the prior means by `1 - exp(-lambda t)` when a lambda is set.
    pub fn estimates(&self) -> Result<Vec<f64>> {
        if self.t == 0 {
            return Ok(self.cells.iter().map(PosteriorCell::prior_mean).collect());
        }
        match self.blend_lambda {
            None => Ok(self
                .cells
                .iter()
                .map(PosteriorCell::point_estimate)
                .collect()),
            Some(lambda) => {
                let w = blend_weight(lambda, self.t)?;
                self.cells
                    .iter()
                    .map(|c| blend(c.prior_mean(), c.point_estimate(), w))
                    .collect()
            }
        }
    }
}

/// Per-seed outcome: hotspot-averaged scores and per-species MAE by step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub seed: u64,
    pub steps: Vec<HotspotScore>,
    /// `species_mae[t][i]`: absolute error of species `i` averaged over hotspots.
    pub species_mae: Vec<Vec<f64>>,
    pub n_hotspots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrajectory {
    pub runs: Vec<RunTrajectory>,
    /// One report per step `t = 0..=T` (only `t = 0` for static priors).
    pub reports: Vec<MetricReport>,
}

impl MetricTrajectory {
    pub fn max_t(&self) -> usize {
        self.reports.len() - 1
    }

    pub fn at(&self, t: usize) -> Option<&MetricReport> {
        self.reports.get(t)
    }

    /// Per-species MAE by step, averaged over runs.
    pub fn species_mae(&self) -> Vec<Vec<f64>> {
        let n_runs = self.runs.len() as f64;
        let mut acc = self.runs[0].species_mae.clone();
        for run in &self.runs[1..] {
            for (row, other) in acc.iter_mut().zip(&run.species_mae) {
                for (a, b) in row.iter_mut().zip(other) {
                    *a += b;
                }
            }
        }
        acc.iter_mut().flatten().for_each(|a| *a /= n_runs);
        acc
    }
}

fn hotspot_seed(seed: u64, hotspot_id: &str) -> u64 {
    derive_seed(
        derive_seed(seed, rng::tag::PARTITION),
        fnv1a(hotspot_id.as_bytes()),
    )
}

/// The shuffled split of one hotspot's checklists used by episodes under
/// `seed`: `updates` holds the reserved history followed by the stream.
pub fn episode_partition(
    hotspot: &HotspotRecord,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<Partition> {
    partition_checklists(
        hotspot,
        cfg.history_reserve + cfg.updates,
        hotspot_seed(seed, &hotspot.hotspot_id),
        cfg.min_eval,
    )
}

/// Scores per step for one hotspot under one seed.
fn hotspot_episode(
    hotspot: &HotspotRecord,
    row: usize,
    priors: &PriorSet,
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
    seed: u64,
) -> Result<Vec<(HotspotScore, Vec<f64>)>> {
    let partition = episode_partition(hotspot, cfg, seed)?;
    let (history, stream) = partition.updates.split_at(cfg.history_reserve);
    let target = match truth {
        GroundTruth::HeldOut => checklist_rates(&partition.eval)?,
        GroundTruth::Known(table) => {
            table.rates.get(row).cloned().ok_or(Error::LengthMismatch {
                expected: row + 1,
                found: table.rates.len(),
            })?
        }
    };
    let score = |pred: &[f64]| -> Result<(HotspotScore, Vec<f64>)> {
        let abs = pred
            .iter()
            .zip(&target)
            .map(|(p, y)| (p - y).abs())
            .collect();
        Ok((HotspotScore::compute(pred, &target)?, abs))
    };

    let beliefs: Vec<EncounterEstimate> = match priors {
        PriorSet::Static(rows) => return Ok(vec![score(&rows[row])?]),
        PriorSet::Beliefs(rows) => rows[row].clone(),
        PriorSet::Historical { means, max_history } => means[row]
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let bits: Vec<bool> = history.iter().map(|c| c.detections[i]).collect();
                historical_variance_prior(m, &bits, *max_history)
            })
            .collect::<Result<_>>()?,
    };
    let mut episode = Episode::new(&beliefs, cfg.blend_lambda)?;
    let mut out = Vec::with_capacity(stream.len() + 1);
    out.push(score(&episode.estimates()?)?);
    for checklist in stream {
        episode.absorb(checklist)?;
        out.push(score(&episode.estimates()?)?);
    }
    Ok(out)
}

fn run_seed(
    dataset: &Dataset,
    priors: &PriorSet,
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
    seed: u64,
) -> Result<Vec<Vec<(HotspotScore, Vec<f64>)>>> {
    if priors.rows() != dataset.hotspots.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.hotspots.len(),
            found: priors.rows(),
        });
    }
    let mut test: Vec<(usize, &HotspotRecord)> = dataset
        .hotspots
        .iter()
        .enumerate()
        .zip(&dataset.splits)
        .filter(|(_, s)| **s == Split::Test)
        .map(|(h, _)| h)
        .collect();
    if test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    // Fixed combination order keeps floating-point sums reproducible.
    test.sort_by(|a, b| a.1.hotspot_id.cmp(&b.1.hotspot_id));
    let one = |&(row, h): &(usize, &HotspotRecord)| {
        hotspot_episode(h, row, priors, cfg, truth, seed).map_err(|e| match e {
            e @ (Error::Hotspot { .. } | Error::InsufficientChecklists { .. }) => e,
            other => other.at_hotspot(&h.hotspot_id),
        })
    };
    if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|_| Error::param("jobs", cfg.jobs as f64, "thread pool unavailable"))?;
        pool.install(|| test.par_iter().map(one).collect())
    } else {
        test.iter().map(one).collect()
    }
}

/// Runs the episode for every seed in `cfg` with priors chosen per seed.
pub fn run_episode_with(
    dataset: &Dataset,
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
    mut priors_for: impl FnMut(u64) -> Result<PriorSet>,
) -> Result<MetricTrajectory> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut per_step: Vec<(Vec<HotspotScore>, Vec<u64>)> = Vec::new();
    for &seed in &cfg.seeds {
        let priors = priors_for(seed)?;
        let hotspots = run_seed(dataset, &priors, cfg, truth, seed)?;
        let n_steps = hotspots[0].len();
        if per_step.is_empty() {
            per_step = vec![(Vec::new(), Vec::new()); n_steps];
        } else if per_step.len() != n_steps {
            return Err(Error::LengthMismatch {
                expected: per_step.len(),
                found: n_steps,
            });
        }
        let n = hotspots.len() as f64;
        let mut steps = Vec::with_capacity(n_steps);
        let mut species_mae = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let scores: Vec<HotspotScore> = hotspots.iter().map(|h| h[t].0).collect();
            steps.push(HotspotScore::mean_of(&scores)?);
            let mut sp = vec![0.0; dataset.n_species()];
            for h in &hotspots {
                for (a, e) in sp.iter_mut().zip(&h[t].1) {
                    *a += e;
                }
            }
            species_mae.push(sp.into_iter().map(|a| a / n).collect());
            per_step[t].0.extend(scores);
            per_step[t]
                .1
                .extend(std::iter::repeat_n(seed, hotspots.len()));
        }
        runs.push(RunTrajectory {
            seed,
            steps,
            species_mae,
            n_hotspots: hotspots.len(),
        });
    }
    let reports = per_step
        .iter()
        .map(|(scores, labels)| aggregate(scores, labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricTrajectory { runs, reports })
}

/// Runs the episode for every seed with the same priors.
pub fn run_episode(
    dataset: &Dataset,
    priors: &PriorSet,
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
) -> Result<MetricTrajectory> {
    run_episode_with(dataset, cfg, truth, |_| Ok(priors.clone()))
}

/// A strategy with its per-seed prior source.
pub struct StrategyRun<'a> {
    pub strategy: Strategy,
    pub priors_for: Box<dyn FnMut(u64) -> Result<PriorSet> + 'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub trajectory: MetricTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    /// Before any update.
    Prior,
    /// After the given number of updates.
    Updated(usize),
}

impl Column {
    pub fn label(&self) -> &'static str {
        match self {
            Column::Prior => "prior",
            Column::Updated(_) => "updated",
        }
    }

    pub fn t(&self) -> usize {
        match self {
            Column::Prior => 0,
            Column::Updated(t) => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub strategy: Strategy,
    pub column: Column,
    pub report: MetricReport,
}

/// Runs every strategy and returns their trajectories in input order.
pub fn run_strategies(
    dataset: &Dataset,
    strategies: Vec<StrategyRun<'_>>,
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
) -> Result<Vec<StrategyResult>> {
    strategies
        .into_iter()
        .map(|mut run| {
            let strategy = run.strategy;
            let trajectory = run_episode_with(dataset, cfg, truth, |seed| {
                let priors = (run.priors_for)(seed)?;
                if priors.is_static() == strategy.is_updatable() {
                    return Err(Error::param(
                        "priors",
                        0.0,
                        "static priors must be paired with a static strategy",
                    ));
                }
                Ok(priors)
            })?;
            Ok(StrategyResult {
                strategy,
                trajectory,
            })
        })
        .collect()
}

/// Table with a prior-only column for every strategy, plus updated columns at
/// `min(step, T)` and at `T` for strategies that can be updated.
pub fn benchmark_table(results: &[StrategyResult], step: usize) -> Vec<BenchmarkRow> {
    let mut rows = Vec::new();
    for r in results {
        let traj = &r.trajectory;
        rows.push(BenchmarkRow {
            strategy: r.strategy,
            column: Column::Prior,
            report: traj.reports[0],
        });
        let max_t = traj.max_t();
        if !r.strategy.is_updatable() || max_t == 0 {
            continue;
        }
        let mut steps = vec![step.min(max_t).max(1)];
        if max_t != steps[0] {
            steps.push(max_t);
        }
        for t in steps {
            rows.push(BenchmarkRow {
                strategy: r.strategy,
                column: Column::Updated(t),
                report: traj.reports[t],
            });
        }
    }
    rows
}

/// Runs the strategies and builds the benchmark table.
pub fn run_benchmark(
    dataset: &Dataset,
    strategies: Vec<StrategyRun<'_>>,
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
    step: usize,
) -> Result<(Vec<StrategyResult>, Vec<BenchmarkRow>)> {
    let results = run_strategies(dataset, strategies, cfg, truth)?;
    let table = benchmark_table(&results, step);
    Ok((results, table))
}

/// One unblended trajectory followed by one trajectory per lambda.
pub fn blend_sweep(
    dataset: &Dataset,
    mut priors_for: impl FnMut(u64) -> Result<PriorSet>,
    lambdas: &[f64],
    cfg: &EpisodeConfig,
    truth: GroundTruth<'_>,
) -> Result<Vec<(Option<f64>, MetricTrajectory)>> {
    for &l in lambdas {
        blend_weight(l, 0)?;
    }
    std::iter::once(None)
        .chain(lambdas.iter().copied().map(Some))
        .map(|lambda| {
            let cfg = EpisodeConfig {
                blend_lambda: lambda,
                ..cfg.clone()
            };
            run_episode_with(dataset, &cfg, truth, &mut priors_for).map(|t| (lambda, t))
        })
        .collect()
}
