//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary (`harness = false`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};

use encounter_core::beta::BetaParams;
use encounter_core::harness::{Episode, RunTrajectory};
use encounter_core::metrics::{mae, mse, top_k_adaptive, top_m};
use encounter_core::models::{gradient_check, Batch, Loss, ModelObjective, MvnModel};
use encounter_core::priors::fixed_variance_prior;
use encounter_core::synthetic::fabricate_priors;
use encounter_core::{
    beta_moments, blend_sweep, blend_weight, episode_partition, generate_world, moment_match,
    run_episode, EncounterEstimate, EpisodeConfig, GroundTruth, PortableRng, PosteriorCell,
    PriorSet, Split, SyntheticWorld, WorldConfig,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn moment_roundtrip() -> Outcome {
    let start = Instant::now();
    let mut rng = PortableRng::new(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = rng.uniform_range(0.1, 50.0);
        let b = rng.uniform_range(0.1, 50.0);
        let p = BetaParams::new(a, b).map_err(|e| e.to_string())?;
        let back = beta_moments(p)
            .and_then(moment_match)
            .map_err(|e| e.to_string())?;
        worst = worst
            .max(((back.alpha() - a) / a).abs())
            .max(((back.beta() - b) / b).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-9, format!("max relative error {worst:e}"))?;
    ensure(
        elapsed < Duration::from_secs(1),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!("max relative error {worst:.2e} in {elapsed:.2?}"))
}

fn conjugacy() -> Outcome {
    let mut rng = PortableRng::new(2);
    let mut worst: f64 = 0.0;
    for s in 0..1000 {
        let len = rng.below(51) as usize;
        let p = rng.uniform();
        let bits: Vec<bool> = (0..len).map(|_| rng.bernoulli(p)).collect();
        let start = PosteriorCell::new(0.37, BetaParams::improper()).map_err(|e| e.to_string())?;
        let mut cell = start;
        let mut hits = 0u32;
        for (t, &b) in bits.iter().enumerate() {
            cell = cell.update_one(b);
            hits += b as u32;
            let freq = hits as f64 / (t + 1) as f64;
            worst = worst.max((cell.point_estimate() - freq).abs());
        }
        let batch = start
            .update_batch(hits as u64, len as u64)
            .map_err(|e| e.to_string())?;
        let same = batch.params().alpha().to_bits() == cell.params().alpha().to_bits()
            && batch.params().beta().to_bits() == cell.params().beta().to_bits()
            && batch.n_updates() == cell.n_updates();
        ensure(
            same,
            format!("stream {s}: batch {batch:?} != fold {cell:?}"),
        )?;
    }
    ensure(
        worst < 1e-12,
        format!("max |estimate - frequency| {worst:e}"),
    )?;
    Ok(format!(
        "1000 streams, max error {worst:.1e}, batch == fold bit-exactly"
    ))
}

fn convergence_world() -> SyntheticWorld {
    generate_world(&WorldConfig {
        n_hotspots: 200,
        n_species: 50,
        rate_sparsity: 0.6,
        seed: 42,
        prior_noise: 0.2,
        checklists_per_hotspot: 130,
        ..WorldConfig::default()
    })
    .expect("world")
}

fn unit_variance(priors: &[Vec<EncounterEstimate>]) -> PriorSet {
    PriorSet::Beliefs(
        priors
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| fixed_variance_prior(e.mean(), 1.0).expect("mean in [0, 1]"))
                    .collect()
            })
            .collect(),
    )
}

/// Hotspot-averaged MAE of raw running frequencies after `n` stream checklists.
fn frequency_oracle(world: &SyntheticWorld, cfg: &EpisodeConfig, seed: u64, n: usize) -> f64 {
    let ds = &world.dataset;
    let mut total = 0.0;
    let mut count = 0;
    for (k, h) in ds.hotspots.iter().enumerate() {
        if ds.splits[k] != Split::Test {
            continue;
        }
        let stream = episode_partition(h, cfg, seed).expect("partition").updates;
        let mut abs = 0.0;
        for i in 0..ds.n_species() {
            let hits = stream[..n].iter().filter(|c| c.detections[i]).count();
            abs += (hits as f64 / n as f64 - world.truth.rates[k][i]).abs();
        }
        total += abs / ds.n_species() as f64;
        count += 1;
    }
    total / count as f64
}

fn convergence(world: &SyntheticWorld) -> Outcome {
    let start = Instant::now();
    let truth = GroundTruth::Known(&world.truth);
    let fabricated = fabricate_priors(world, 0.2, true, 42).map_err(|e| e.to_string())?;

    let long = EpisodeConfig {
        updates: 100,
        seeds: vec![42],
        ..EpisodeConfig::default()
    };
    let traj = run_episode(&world.dataset, &unit_variance(&fabricated), &long, truth)
        .map_err(|e| e.to_string())?;
    let mae_100 = traj.reports[100].mean.mae;
    let oracle = frequency_oracle(world, &long, 42, 100);
    ensure(mae_100 < 0.06, format!("MAE after 100 updates {mae_100}"))?;
    ensure(
        (mae_100 - oracle).abs() < 1e-12,
        format!("harness {mae_100} vs frequency oracle {oracle}"),
    )?;

    let short = EpisodeConfig {
        seeds: vec![1, 2, 3],
        ..EpisodeConfig::default()
    };
    let calibrated = PriorSet::Beliefs(fabricated);
    let traj =
        run_episode(&world.dataset, &calibrated, &short, truth).map_err(|e| e.to_string())?;
    let (m0, m10) = (traj.reports[0].mean.mae, traj.reports[10].mean.mae);
    ensure(m10 < m0, format!("calibrated MAE t=10 {m10} >= t=0 {m0}"))?;
    let elapsed = start.elapsed();
    ensure(
        elapsed < Duration::from_secs(30),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "MAE@100 {mae_100:.4} (oracle {oracle:.4}); calibrated MAE {m0:.4} -> {m10:.4} at t=10; {elapsed:.2?}"
    ))
}

fn step_mae(run: &RunTrajectory, t: usize) -> f64 {
    run.steps[t].mae
}

fn aleatoric(world: &SyntheticWorld) -> Outcome {
    let truth = GroundTruth::Known(&world.truth);
    let mut lines = Vec::new();
    for seed in [1u64, 2, 3] {
        let cfg = EpisodeConfig {
            seeds: vec![seed],
            ..EpisodeConfig::default()
        };
        let run = |calibrated: bool| -> Result<f64, String> {
            let p = fabricate_priors(world, 0.2, calibrated, seed).map_err(|e| e.to_string())?;
            let traj = run_episode(&world.dataset, &PriorSet::Beliefs(p), &cfg, truth)
                .map_err(|e| e.to_string())?;
            Ok(step_mae(&traj.runs[0], 5))
        };
        let (cal, over) = (run(true)?, run(false)?);
        ensure(
            cal < over,
            format!("seed {seed}: calibrated {cal} >= overconfident {over}"),
        )?;
        lines.push(format!("{cal:.4}<{over:.4}"));
    }
    Ok(format!(
        "MAE@5 calibrated<overconfident per seed: {}",
        lines.join(", ")
    ))
}

/// Every subset of `0..n` of size `k` whose members all precede every
/// non-member under (value descending, index ascending); exactly one exists.
fn oracle_top_set(v: &[f64], k: usize) -> u32 {
    let n = v.len();
    let before = |i: usize, j: usize| v[i] > v[j] || (v[i] == v[j] && i < j);
    let valid: Vec<u32> = (0u32..1 << n)
        .filter(|s| s.count_ones() as usize == k)
        .filter(|s| {
            (0..n)
                .filter(|i| s >> i & 1 == 1)
                .all(|i| (0..n).filter(|j| s >> j & 1 == 0).all(|j| before(i, j)))
        })
        .collect();
    assert_eq!(valid.len(), 1, "oracle must be unique");
    valid[0]
}

fn overlap(pred: u32, truth: u32, k: usize) -> f64 {
    100.0 * (pred & truth).count_ones() as f64 / k as f64
}

fn metric_oracles() -> Outcome {
    const GRID: [f64; 3] = [0.0, 0.5, 1.0];
    let mut pairs = 0usize;
    for n in 1..=6usize {
        let vectors: Vec<Vec<f64>> = (0..GRID.len().pow(n as u32))
            .map(|mut code| {
                (0..n)
                    .map(|_| {
                        let v = GRID[code % GRID.len()];
                        code /= GRID.len();
                        v
                    })
                    .collect()
            })
            .collect();
        let sets: Vec<Vec<u32>> = vectors
            .iter()
            .map(|v| {
                (0..=n)
                    .map(|k| if k == 0 { 0 } else { oracle_top_set(v, k) })
                    .collect()
            })
            .collect();
        for (pi, p) in vectors.iter().enumerate() {
            for (ti, t) in vectors.iter().enumerate() {
                pairs += 1;
                let direct_mae =
                    p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
                let direct_mse =
                    p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
                let got_mae = mae(p, t).map_err(|e| e.to_string())?;
                let got_mse = mse(p, t).map_err(|e| e.to_string())?;
                ensure(
                    (got_mae - direct_mae).abs() <= 1e-12 && (got_mse - direct_mse).abs() <= 1e-12,
                    format!("MAE/MSE mismatch on {p:?} vs {t:?}"),
                )?;
                let k = t.iter().filter(|&&y| y != 0.0).count();
                let expect = if k == 0 {
                    0.0
                } else {
                    overlap(sets[pi][k], sets[ti][k], k)
                };
                let got = top_k_adaptive(p, t).map_err(|e| e.to_string())?;
                ensure(
                    got == expect,
                    format!("top-k {got} != {expect} on {p:?} vs {t:?}"),
                )?;
                for m in (1..=n).chain([10, 30]) {
                    let km = m.min(n);
                    let expect = overlap(sets[pi][km], sets[ti][km], km);
                    let got = top_m(p, t, m).map_err(|e| e.to_string())?;
                    ensure(
                        got == expect,
                        format!("top-{m} {got} != {expect} on {p:?} vs {t:?}"),
                    )?;
                }
            }
        }
    }
    let zero = top_k_adaptive(&[0.3, 0.9, 0.1], &[0.0; 3]).map_err(|e| e.to_string())?;
    ensure(zero == 0.0, "all-zero truth must score 0")?;
    Ok(format!(
        "{pairs} prediction/truth pairs over N <= 6 match the subset oracle"
    ))
}

fn gradient_fidelity() -> Outcome {
    let losses = [
        Loss::CrossEntropy,
        Loss::GaussianNll,
        Loss::GaussianNllRegularized {
            lambda_mu: 0.1,
            lambda_sigma: 0.1,
        },
    ];
    let mut worst: f64 = 0.0;
    for b in 0..10u64 {
        let mut rng = PortableRng::new(100 + b);
        let (rows, d, h, n) = (4 + b as usize % 3, 3, 5, 4);
        let inputs = (0..rows)
            .map(|_| (0..d).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let targets = (0..rows)
            .map(|_| (0..n).map(|_| rng.uniform_range(0.0, 1.0)).collect())
            .collect();
        let batch = Batch::new(inputs, targets).map_err(|e| e.to_string())?;
        let model = MvnModel::new(d, h, n, 200 + b).map_err(|e| e.to_string())?;
        for loss in losses {
            for warmup in [false, true] {
                let obj = ModelObjective {
                    model: &model,
                    batch: &batch,
                    loss,
                    warmup,
                };
                let err = gradient_check(&obj, 1e-5, usize::MAX, b).map_err(|e| e.to_string())?;
                ensure(
                    err < 1e-4,
                    format!("batch {b} {loss:?} warmup={warmup}: {err:e}"),
                )?;
                worst = worst.max(err);
                if warmup {
                    let (_, g) = model
                        .loss_and_gradient(&batch, loss, true)
                        .map_err(|e| e.to_string())?;
                    ensure(
                        g[model.variance_head_range()].iter().all(|&x| x == 0.0),
                        format!("batch {b} {loss:?}: variance head moves during warmup"),
                    )?;
                }
            }
        }
    }
    Ok(format!(
        "max relative error {worst:.2e}; warmup variance gradients exactly 0"
    ))
}

fn blending(world: &SyntheticWorld) -> Outcome {
    let mut rng = PortableRng::new(7);
    for _ in 0..1000 {
        let lambda = 1.0 - rng.uniform();
        let w = |t| blend_weight(lambda, t).map_err(|e| e.to_string());
        ensure(w(0)? == 0.0, format!("w_0 = {} for lambda {lambda}", w(0)?))?;
        for t in 1..=30 {
            ensure(
                w(t)? > w(t - 1)?,
                format!("w not increasing at t={t}, lambda {lambda}"),
            )?;
        }
    }
    let mut worst: f64 = 0.0;
    for lambda in [0.1, 1.0] {
        for t in 0..=50u64 {
            let hand = 1.0 - (-lambda * t as f64).exp();
            worst = worst.max((blend_weight(lambda, t).map_err(|e| e.to_string())? - hand).abs());
        }
        let prior = [fixed_variance_prior(0.2, 0.5).map_err(|e| e.to_string())?];
        let mut ep = Episode::new(&prior, Some(lambda)).map_err(|e| e.to_string())?;
        let mut post = ep.cells()[0];
        for (t, bit) in [true, false, true, true, false].into_iter().enumerate() {
            ep.absorb(&encounter_core::Checklist::new("c", vec![bit]))
                .map_err(|e| e.to_string())?;
            post = post.update_one(bit);
            let w = 1.0 - (-lambda * (t + 1) as f64).exp();
            let hand = (1.0 - w) * 0.2 + w * post.point_estimate();
            worst = worst.max((ep.estimates().map_err(|e| e.to_string())?[0] - hand).abs());
        }
    }
    ensure(
        worst < 1e-12,
        format!("max deviation from 1 - exp(-lambda t): {worst:e}"),
    )?;

    let fabricated = fabricate_priors(world, 0.2, true, 5).map_err(|e| e.to_string())?;
    let priors = PriorSet::Beliefs(fabricated);
    let cfg = EpisodeConfig {
        seeds: vec![5],
        ..EpisodeConfig::default()
    };
    let sweep = blend_sweep(
        &world.dataset,
        |_| Ok(priors.clone()),
        &[0.1, 0.5, 1.0],
        &cfg,
        GroundTruth::Known(&world.truth),
    )
    .map_err(|e| e.to_string())?;
    let t0 = sweep[0].1.reports[0];
    ensure(
        sweep.iter().all(|(_, t)| t.reports[0] == t0),
        "t = 0 scores differ across lambdas",
    )?;
    Ok(format!(
        "w_0 = 0, strictly increasing; max |w - hand| {worst:.1e}; {} trajectories share t=0",
        sweep.len()
    ))
}

const PINNED_CONFIG: &str = "\
run.seed = 7
run.n_seeds = 3
world.n_hotspots = 40
world.n_species = 20
world.feature_dim = 4
world.checklists_per_hotspot = 40
priors.mcd_passes = 10
";

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_encounter")
}

fn invoke(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`encounter {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// simulate + run + report under the pinned config; returns every output
/// file keyed by its path relative to `dir`.
fn pipeline(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    fs::write(dir.join("pinned.toml"), PINNED_CONFIG).map_err(|e| e.to_string())?;
    invoke(
        dir,
        &["simulate", "--config", "pinned.toml", "--out", "world"],
    )?;
    invoke(
        dir,
        &[
            "run",
            "--config",
            "pinned.toml",
            "--data",
            "world",
            "--out",
            "run",
        ],
    )?;
    invoke(
        dir,
        &[
            "report",
            "--config",
            "pinned.toml",
            "run/trajectory.csv",
            "--out",
            "report",
        ],
    )?;
    let mut files = BTreeMap::new();
    for sub in ["world", "run", "report"] {
        let mut entries: Vec<_> = fs::read_dir(dir.join(sub))
            .map_err(|e| e.to_string())?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        entries.sort();
        for p in entries {
            let bytes = fs::read(&p).map_err(|e| e.to_string())?;
            files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), bytes);
        }
    }
    Ok(files)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = pipeline(a.path())?;
    let fb = pipeline(b.path())?;
    ensure(
        fa.keys().eq(fb.keys()),
        format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()),
    )?;
    for (name, bytes) in &fa {
        ensure(
            bytes == &fb[name],
            format!("{} differs between invocations", name.display()),
        )?;
    }
    for m in [
        "world/simulate.manifest.json",
        "run/run.manifest.json",
        "report/report.manifest.json",
    ] {
        ensure(fa.contains_key(Path::new(m)), format!("{m} missing"))?;
    }
    // Manifest digests must describe the files actually written.
    let manifest = String::from_utf8_lossy(&fa[Path::new("run/run.manifest.json")]).into_owned();
    let digest = sha256_hex(&fa[Path::new("run/trajectory.csv")]);
    ensure(
        manifest.contains(&digest),
        "run manifest lacks the trajectory digest",
    )?;
    Ok(format!(
        "{} files byte-identical across two invocations",
        fa.len()
    ))
}

fn benchmark_shape() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let files = pipeline(dir.path())?;
    let text = String::from_utf8_lossy(&files[Path::new("run/benchmark.csv")]).into_owned();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    ensure(
        header[..3] == ["strategy", "column", "t"],
        format!("header {header:?}"),
    )?;
    let sd_col = header
        .iter()
        .position(|h| *h == "mae_sd")
        .ok_or("no mae_sd column")?;
    let mut columns: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        ensure(
            f[sd_col].parse::<f64>().map_err(|e| e.to_string())? > 0.0,
            format!("{line}: sd over three seeds not populated"),
        )?;
        columns
            .entry(f[0].to_string())
            .or_default()
            .push((f[1].to_string(), f[2].to_string()));
    }
    let col = |c: &str, t: &str| (c.to_string(), t.to_string());
    for s in ["MeanRate-static", "model-static"] {
        ensure(
            columns.get(s) == Some(&vec![col("prior", "0")]),
            format!("{s}: {:?}", columns.get(s)),
        )?;
    }
    for s in ["FV", "HV", "DE", "SE", "MCD", "MVN", "HetReg"] {
        let got = columns.get(s).ok_or(format!("{s} missing"))?;
        ensure(
            got.starts_with(&[col("prior", "0"), col("updated", "5")]),
            format!("{s}: {got:?}"),
        )?;
    }
    Ok(format!(
        "{} strategies; static rows prior-only, others prior + t=5",
        columns.len()
    ))
}

fn main() {
    let world = convergence_world();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("moment-match roundtrip", Box::new(moment_roundtrip)),
        ("conjugacy oracle", Box::new(conjugacy)),
        ("convergence", Box::new(|| convergence(&world))),
        (
            "calibrated beats overconfident",
            Box::new(|| aleatoric(&world)),
        ),
        ("metric oracles", Box::new(metric_oracles)),
        ("gradient fidelity", Box::new(gradient_fidelity)),
        ("blending contract", Box::new(|| blending(&world))),
        ("end-to-end determinism", Box::new(determinism)),
        ("benchmark table shape", Box::new(benchmark_shape)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {} {name}: {reason}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
