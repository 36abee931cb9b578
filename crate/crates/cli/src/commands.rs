use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use encounter_core::harness::{
    read_trajectory_csv, run_benchmark, summarize_trajectories, write_benchmark_csv,
    write_species_trajectory_csv, write_sweep_csv, write_trajectory_csv, BenchmarkRow, Column,
    StrategyRun, SummaryRow,
};
use encounter_core::metrics::MetricReport;
use encounter_core::models::{
    read_models, train_mvn, training_batch, write_models, TrainConfig, TrainLoss,
};
use encounter_core::observations::{assign_splits, DatasetPaths};
use encounter_core::priors::read_member_predictions;
use encounter_core::rng::{derive_seed, tag};
use encounter_core::synthetic::{read_truth, write_truth};
use encounter_core::{
    blend_sweep, generate_world, load_dataset, save_dataset, Dataset, EpisodeConfig, GroundTruth,
    PriorSet, Split, Strategy, WorldConfig,
};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::sources::{prior_set, PriorSettings, Source};

pub const TRUTH_FILE: &str = "truth.csv";
pub const MODELS_FILE: &str = "models.csv";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap().to_string_lossy().into_owned()
}

fn record_dataset(m: &mut ManifestBuilder, paths: &DatasetPaths) -> CliResult<()> {
    for p in paths.existing_inputs() {
        m.input("dataset", p)?;
    }
    Ok(())
}

fn record_outputs(m: &mut ManifestBuilder, paths: &DatasetPaths) -> CliResult<()> {
    for p in paths.existing_inputs() {
        m.output(&file_name(p))?;
    }
    Ok(())
}

/// Per-run seeds expanded from the top-level seed.
pub fn run_seeds(cfg: &Config) -> Vec<u64> {
    let base = derive_seed(cfg.u64("run.seed"), tag::RUNS);
    (0..cfg.u64("run.n_seeds"))
        .map(|i| derive_seed(base, i))
        .collect()
}

pub fn simulate(cfg: &Config, config_path: Option<&Path>, out: &Path) -> CliResult<()> {
    let world_cfg = WorldConfig {
        n_hotspots: cfg.usize("world.n_hotspots"),
        n_species: cfg.usize("world.n_species"),
        feature_dim: cfg.usize("world.feature_dim"),
        rate_sparsity: cfg.f64("world.rate_sparsity"),
        seed: cfg.u64("run.seed"),
        prior_noise: cfg.f64("priors.noise"),
        checklists_per_hotspot: cfg.usize("world.checklists_per_hotspot"),
        test_fraction: cfg.f64("world.test_fraction"),
        val_fraction: cfg.f64("world.val_fraction"),
    };
    let world = generate_world(&world_cfg)?;
    create_dir(out)?;
    let paths = DatasetPaths::in_dir(out);
    save_dataset(&world.dataset, &paths)?;
    write_truth(&out.join(TRUTH_FILE), &world.dataset, &world.truth)?;

    let mut m = ManifestBuilder::new("simulate", cfg, &["world", "run.seed", "priors.noise"], out);
    m.seeds(&[world_cfg.seed]);
    if let Some(p) = config_path {
        m.input("config", p)?;
    }
    record_outputs(&mut m, &paths)?;
    m.output(TRUTH_FILE)?;
    m.write()?;
    println!(
        "wrote {} hotspots x {} species ({} checklists each) to {}",
        world_cfg.n_hotspots,
        world_cfg.n_species,
        world_cfg.checklists_per_hotspot,
        out.display()
    );
    Ok(())
}

pub fn ingest(cfg: &Config, config_path: Option<&Path>, data: &Path, out: &Path) -> CliResult<()> {
    let inputs = DatasetPaths::in_dir(data);
    let mut dataset = load_dataset(&inputs)?;
    let had_splits = inputs.splits.exists();
    if !had_splits {
        let splits = assign_splits(
            &dataset.hotspots,
            cfg.usize("ingest.min_test_checklists"),
            cfg.f64("ingest.test_fraction"),
            cfg.f64("ingest.val_fraction"),
            cfg.u64("run.seed"),
        )?;
        dataset = Dataset::new(dataset.species, dataset.hotspots, splits)?;
    }
    create_dir(out)?;
    let paths = DatasetPaths::in_dir(out);
    save_dataset(&dataset, &paths)?;

    let mut m = ManifestBuilder::new("ingest", cfg, &["ingest", "run.seed"], out);
    m.seeds(&[cfg.u64("run.seed")]);
    if let Some(p) = config_path {
        m.input("config", p)?;
    }
    record_dataset(&mut m, &inputs)?;
    record_outputs(&mut m, &paths)?;
    m.write()?;

    let count = |s: Split| dataset.splits.iter().filter(|x| **x == s).count();
    let checklists: usize = dataset.hotspots.iter().map(|h| h.checklists.len()).sum();
    println!(
        "{} species, {} hotspots ({} train / {} val / {} test{}), {} checklists",
        dataset.n_species(),
        dataset.hotspots.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        if had_splits { "" } else { ", assigned" },
        checklists
    );
    Ok(())
}

fn train_config(cfg: &Config, seed: u64) -> CliResult<TrainConfig> {
    let loss = match cfg.str("train.loss") {
        "ce" => TrainLoss::CrossEntropy,
        "gl" => TrainLoss::GaussianNll,
        "glt" => TrainLoss::GaussianNllRegularized,
        other => {
            return Err(CliError::Config(format!(
                "`train.loss` must be ce, gl or glt, got `{other}`"
            )))
        }
    };
    let tc = TrainConfig {
        learning_rate: cfg.f64("train.learning_rate"),
        batch_size: cfg.usize("train.batch_size"),
        max_epochs: cfg.usize("train.max_epochs"),
        warmup_epochs: cfg.usize("train.warmup_epochs"),
        lambda_mu: cfg.f64("train.lambda_mu"),
        lambda_sigma: cfg.f64("train.lambda_sigma"),
        hidden: cfg.usize("train.hidden"),
        loss,
        seed,
    };
    tc.validate()?;
    Ok(tc)
}

pub fn train(cfg: &Config, config_path: Option<&Path>, data: &Path, out: &Path) -> CliResult<()> {
    let paths = DatasetPaths::in_dir(data);
    let dataset = load_dataset(&paths)?;
    let batch = training_batch(&dataset, Split::Train)?;
    let members = cfg.usize("train.members");
    if members == 0 {
        return Err(CliError::Config("`train.members` must be >= 1".into()));
    }
    let base = derive_seed(cfg.u64("run.seed"), tag::INIT);
    let seeds: Vec<u64> = (0..members as u64).map(|j| derive_seed(base, j)).collect();
    let mut models = Vec::with_capacity(members);
    let mut losses = String::from("member,epoch,loss\n");
    for (j, &seed) in seeds.iter().enumerate() {
        let trained = train_mvn(&batch, &train_config(cfg, seed)?)?;
        for (e, l) in trained.epoch_losses.iter().enumerate() {
            losses.push_str(&format!("{j},{e},{l}\n"));
        }
        println!(
            "member {j}: loss {} -> {}",
            trained.epoch_losses.first().copied().unwrap_or(f64::NAN),
            trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
        models.push(trained.model);
    }
    create_dir(out)?;
    write_models(&out.join(MODELS_FILE), &models)?;
    write_text(&out.join("train_losses.csv"), &losses)?;

    let mut m = ManifestBuilder::new("train", cfg, &["train", "run.seed"], out);
    m.seeds(&seeds);
    if let Some(p) = config_path {
        m.input("config", p)?;
    }
    record_dataset(&mut m, &paths)?;
    m.output(MODELS_FILE)?;
    m.output("train_losses.csv")?;
    m.write()?;
    Ok(())
}

/// Inputs shared by `run` and `sweep`.
pub struct RunInputs<'a> {
    pub data: &'a Path,
    pub truth: Option<&'a Path>,
    pub model: Option<&'a Path>,
    pub predictions: Option<&'a Path>,
}

struct Loaded {
    paths: DatasetPaths,
    dataset: Dataset,
    truth: Option<(PathBuf, encounter_core::TruthTable)>,
    source: Source,
    source_path: Option<PathBuf>,
}

fn load_inputs(cfg: &Config, inputs: &RunInputs<'_>) -> CliResult<Loaded> {
    let paths = DatasetPaths::in_dir(inputs.data);
    let dataset = load_dataset(&paths)?;
    let truth_path = match inputs.truth {
        Some(p) => Some(p.to_path_buf()),
        None => Some(inputs.data.join(TRUTH_FILE)).filter(|p| p.exists()),
    };
    let truth = match truth_path {
        Some(p) => {
            let t = read_truth(&p, &dataset)?;
            Some((p, t))
        }
        None => None,
    };
    let source_name = match cfg.str("priors.source") {
        "auto" if inputs.predictions.is_some() => "predictions",
        "auto" if inputs.model.is_some() => "model",
        "auto" => "fabricated",
        other => other,
    };
    let (source, source_path) = match source_name {
        "fabricated" => {
            let (_, t) = truth.as_ref().ok_or_else(|| {
                CliError::Usage("fabricated priors need a truth file (--truth)".into())
            })?;
            (Source::Fabricated(t.clone()), None)
        }
        "model" => {
            let p = inputs
                .model
                .ok_or_else(|| CliError::Usage("model priors need --model".into()))?;
            (Source::Model(read_models(p)?), Some(p.to_path_buf()))
        }
        "predictions" => {
            let p = inputs
                .predictions
                .ok_or_else(|| CliError::Usage("prediction priors need --predictions".into()))?;
            (
                Source::Predictions(read_member_predictions(p, &dataset)?),
                Some(p.to_path_buf()),
            )
        }
        other => {
            return Err(CliError::Config(format!(
                "`priors.source` must be auto, fabricated, model or predictions, got `{other}`"
            )))
        }
    };
    Ok(Loaded {
        paths,
        dataset,
        truth,
        source,
        source_path,
    })
}

fn episode_config(cfg: &Config, seeds: Vec<u64>, lambda: Option<f64>) -> EpisodeConfig {
    EpisodeConfig {
        updates: cfg.usize("run.updates"),
        min_eval: cfg.usize("run.min_eval"),
        // Always reserved, so every strategy sees the same stream and
        // evaluation set whether or not HV is part of the run.
        history_reserve: cfg.usize("priors.max_history"),
        seeds,
        blend_lambda: lambda,
        jobs: cfg.usize("run.jobs"),
    }
}

fn ground_truth<'a>(cfg: &Config, loaded: &'a Loaded) -> CliResult<GroundTruth<'a>> {
    match cfg.str("run.scoring") {
        "heldout" => Ok(GroundTruth::HeldOut),
        "truth" => loaded
            .truth
            .as_ref()
            .map(|(_, t)| GroundTruth::Known(t))
            .ok_or_else(|| CliError::Usage("`run.scoring = truth` needs a truth file".into())),
        other => Err(CliError::Config(format!(
            "`run.scoring` must be heldout or truth, got `{other}`"
        ))),
    }
}

fn parse_lambda(cfg: &Config) -> CliResult<Option<f64>> {
    match cfg.str("run.lambda") {
        "none" | "" => Ok(None),
        s => s.parse::<f64>().map(Some).map_err(|_| {
            CliError::Config(format!("`run.lambda` must be a number or none, got `{s}`"))
        }),
    }
}

pub fn parse_strategies(list: &str) -> CliResult<Vec<Strategy>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let s: Strategy = name.parse().map_err(CliError::Usage)?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no strategy selected".into()));
    }
    Ok(out)
}

fn record_run_inputs(
    m: &mut ManifestBuilder,
    config_path: Option<&Path>,
    loaded: &Loaded,
) -> CliResult<()> {
    if let Some(p) = config_path {
        m.input("config", p)?;
    }
    record_dataset(m, &loaded.paths)?;
    if let Some((p, _)) = &loaded.truth {
        m.input("truth", p)?;
    }
    if let Some(p) = &loaded.source_path {
        m.input(loaded.source.name(), p)?;
    }
    Ok(())
}

pub fn run(
    cfg: &Config,
    config_path: Option<&Path>,
    inputs: &RunInputs<'_>,
    out: &Path,
) -> CliResult<()> {
    let loaded = load_inputs(cfg, inputs)?;
    let mut strategies = parse_strategies(cfg.str("run.strategies"))?;
    if matches!(loaded.source, Source::Model(_)) && !cfg.is_explicit("run.strategies") {
        strategies.retain(|s| *s != Strategy::ShallowEnsemble);
    }
    let seeds = run_seeds(cfg);
    let ecfg = episode_config(cfg, seeds.clone(), parse_lambda(cfg)?);
    let truth = ground_truth(cfg, &loaded)?;
    let settings = PriorSettings::from_config(cfg);

    let mut runs = Vec::with_capacity(strategies.len());
    for &strategy in &strategies {
        let sets = prior_sets(strategy, &loaded, &settings, &seeds)?;
        runs.push(StrategyRun {
            strategy,
            priors_for: Box::new(move |seed| Ok(sets[&seed].clone())),
        });
    }
    let (results, table) = run_benchmark(
        &loaded.dataset,
        runs,
        &ecfg,
        truth,
        cfg.usize("run.benchmark_step"),
    )?;

    create_dir(out)?;
    let named: Vec<(&str, &_)> = results
        .iter()
        .map(|r| (r.strategy.name(), &r.trajectory))
        .collect();
    write_trajectory_csv(&out.join("trajectory.csv"), &named)?;
    write_benchmark_csv(&out.join("benchmark.csv"), &table)?;
    let mut species_files = Vec::new();
    for r in &results {
        let name = format!("species_trajectory_{}.csv", r.strategy.name());
        write_species_trajectory_csv(&out.join(&name), &loaded.dataset.species, &r.trajectory)?;
        species_files.push(name);
    }

    let mut m = ManifestBuilder::new("run", cfg, &["run", "priors"], out);
    m.seeds(&seeds);
    record_run_inputs(&mut m, config_path, &loaded)?;
    m.output("trajectory.csv")?;
    m.output("benchmark.csv")?;
    for f in &species_files {
        m.output(f)?;
    }
    m.write()?;
    print!("{}", render_benchmark(&table));
    Ok(())
}

fn prior_sets(
    strategy: Strategy,
    loaded: &Loaded,
    settings: &PriorSettings,
    seeds: &[u64],
) -> CliResult<BTreeMap<u64, PriorSet>> {
    seeds
        .iter()
        .map(|&seed| {
            let set = prior_set(strategy, &loaded.source, &loaded.dataset, settings, seed)?;
            Ok((seed, set))
        })
        .collect()
}

pub fn sweep(
    cfg: &Config,
    config_path: Option<&Path>,
    inputs: &RunInputs<'_>,
    out: &Path,
) -> CliResult<()> {
    let loaded = load_inputs(cfg, inputs)?;
    let strategy: Strategy = cfg.str("sweep.strategy").parse().map_err(CliError::Usage)?;
    if !strategy.is_updatable() {
        return Err(CliError::Usage(format!(
            "{strategy} priors cannot be updated"
        )));
    }
    let lambdas = cfg.floats("sweep.lambdas");
    let seeds = run_seeds(cfg);
    let ecfg = episode_config(cfg, seeds.clone(), None);
    let truth = ground_truth(cfg, &loaded)?;
    let settings = PriorSettings::from_config(cfg);
    let sets = prior_sets(strategy, &loaded, &settings, &seeds)?;
    let sweep = blend_sweep(
        &loaded.dataset,
        |seed| Ok(sets[&seed].clone()),
        &lambdas,
        &ecfg,
        truth,
    )?;
    create_dir(out)?;
    write_sweep_csv(&out.join("sweep.csv"), strategy.name(), &sweep)?;
    let mut m = ManifestBuilder::new("sweep", cfg, &["run", "priors", "sweep"], out);
    m.seeds(&seeds);
    record_run_inputs(&mut m, config_path, &loaded)?;
    m.output("sweep.csv")?;
    m.write()?;

    println!("{:<8} {:>4} {:>10} {:>10}", "lambda", "t", "mae", "topk");
    for (lambda, traj) in &sweep {
        let label = lambda.map_or_else(|| "none".to_string(), |l| l.to_string());
        for t in [0, 1, traj.max_t()] {
            let r = &traj.reports[t];
            println!(
                "{:<8} {:>4} {:>10.5} {:>10.5}",
                label, t, r.mean.mae, r.mean.topk
            );
        }
    }
    Ok(())
}

fn cell(r: Option<&MetricReport>) -> [String; 2] {
    match r {
        Some(r) if r.n_runs > 1 => [
            format!("{:.4} ± {:.4}", r.mean.mae, r.sd_runs.mae),
            format!("{:.4} ± {:.4}", r.mean.topk, r.sd_runs.topk),
        ],
        Some(r) => [format!("{:.4}", r.mean.mae), format!("{:.4}", r.mean.topk)],
        None => ["n/a".into(), "n/a".into()],
    }
}

fn render_table(
    rows: &[(
        String,
        Option<&MetricReport>,
        Option<(usize, &MetricReport)>,
        String,
    )],
) -> String {
    let step = rows.iter().find_map(|r| r.2.map(|(t, _)| t)).unwrap_or(0);
    let mut lines = vec![[
        "strategy".to_string(),
        "prior mae".into(),
        "prior topk".into(),
        format!("t={step} mae"),
        format!("t={step} topk"),
        "note".into(),
    ]];
    for (name, prior, updated, note) in rows {
        let [pm, pk] = cell(*prior);
        let [um, uk] = cell(updated.map(|u| u.1));
        lines.push([name.clone(), pm, pk, um, uk, note.clone()]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|j| {
            lines
                .iter()
                .map(|l| l[j].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for l in &lines {
        let cols: Vec<String> = l
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        out.push_str(cols.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn render_benchmark(table: &[BenchmarkRow]) -> String {
    let mut rows = Vec::new();
    let mut seen: Vec<Strategy> = Vec::new();
    for r in table {
        if !seen.contains(&r.strategy) {
            seen.push(r.strategy);
        }
    }
    for s in seen {
        let prior = table
            .iter()
            .find(|r| r.strategy == s && r.column == Column::Prior)
            .map(|r| &r.report);
        let updated = table
            .iter()
            .find(|r| r.strategy == s && matches!(r.column, Column::Updated(_)))
            .map(|r| (r.column.t(), &r.report));
        rows.push((s.name().to_string(), prior, updated, String::new()));
    }
    render_table(&rows)
}

pub const SUMMARY_HEADER: &str =
    "strategy,t,mae,mae_sd,mse,mse_sd,top10,top10_sd,top30,top30_sd,topk,topk_sd,n_runs,n_hotspots,missing_from";

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let mut fields = vec![r.strategy.clone(), r.t.to_string()];
        for (m, sd) in r
            .report
            .mean
            .values()
            .into_iter()
            .zip(r.report.sd_runs.values())
        {
            fields.push(m.to_string());
            fields.push(sd.to_string());
        }
        fields.push(r.report.n_runs.to_string());
        fields.push(r.report.n_hotspots.to_string());
        let missing: Vec<String> = r.missing_from.iter().map(|p| file_name(p)).collect();
        fields.push(missing.join(";"));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn report(
    cfg: &Config,
    config_path: Option<&Path>,
    files: &[PathBuf],
    out: &Path,
) -> CliResult<()> {
    if files.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one trajectory file".into(),
        ));
    }
    let loaded = files
        .iter()
        .map(|p| Ok((p.clone(), read_trajectory_csv(p)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let summary = summarize_trajectories(&loaded)?;
    let step = cfg.usize("report.step");

    let mut order: Vec<&str> = Vec::new();
    for r in &summary {
        if !order.contains(&r.strategy.as_str()) {
            order.push(&r.strategy);
        }
    }
    let rows: Vec<_> = order
        .iter()
        .map(|name| {
            let of: Vec<&SummaryRow> = summary.iter().filter(|r| r.strategy == *name).collect();
            let prior = of.iter().find(|r| r.t == 0).map(|r| &r.report);
            let max_t = of.iter().map(|r| r.t).max().unwrap_or(0);
            let t = step.min(max_t);
            let updated = (t > 0)
                .then(|| of.iter().find(|r| r.t == t).map(|r| (t, &r.report)))
                .flatten();
            let missing = &of[0].missing_from;
            let note = if missing.is_empty() {
                String::new()
            } else {
                let names: Vec<String> = missing.iter().map(|p| file_name(p)).collect();
                format!("missing from {}", names.join(", "))
            };
            (name.to_string(), prior, updated, note)
        })
        .collect();
    let text = render_table(&rows);

    create_dir(out)?;
    write_text(&out.join("summary.csv"), &summary_csv(&summary))?;
    write_text(&out.join("summary.txt"), &text)?;
    let mut m = ManifestBuilder::new("report", cfg, &["report"], out);
    if let Some(p) = config_path {
        m.input("config", p)?;
    }
    for (i, p) in files.iter().enumerate() {
        m.input(format!("trajectory[{i}]"), p)?;
    }
    m.output("summary.csv")?;
    m.output("summary.txt")?;
    m.write()?;
    print!("{text}");
    if cfg.bool("report.verbose") {
        print!("{}", summary_csv(&summary));
    }
    Ok(())
}
