//! Turns a strategy plus a prior source into per-hotspot priors.

use encounter_core::models::{mean_rate_baseline, MvnModel};
use encounter_core::priors::{
    ensemble_prior, fixed_variance_prior, hetreg_prior, mvn_prior, MemberPredictions,
};
use encounter_core::rng::{derive_seed, fnv1a, tag};
use encounter_core::synthetic::{fabricate_from_truth, fabricate_members};
use encounter_core::{
    Dataset, EncounterEstimate, PortableRng, PriorSet, Result as CoreResult, Split, Strategy,
    TruthTable,
};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub enum Source {
    /// Noisy copies of known rates.
    Fabricated(TruthTable),
    /// Trained networks; the first is the reference model, all of them
    /// together form the deep ensemble.
    Model(Vec<MvnModel>),
    /// Member outputs read from a file, aligned with the dataset.
    Predictions(Vec<Option<Vec<MemberPredictions>>>),
}

impl Source {
    pub fn name(&self) -> &'static str {
        match self {
            Source::Fabricated(_) => "fabricated",
            Source::Model(_) => "model",
            Source::Predictions(_) => "predictions",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSettings {
    pub noise: f64,
    pub tau: f64,
    pub max_history: usize,
    pub de_members: usize,
    pub se_heads: usize,
    pub mcd_passes: usize,
    pub dropout: f64,
}

impl PriorSettings {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            noise: cfg.f64("priors.noise"),
            tau: cfg.f64("priors.tau"),
            max_history: cfg.usize("priors.max_history"),
            de_members: cfg.usize("priors.de_members"),
            se_heads: cfg.usize("priors.se_heads"),
            mcd_passes: cfg.usize("priors.mcd_passes"),
            dropout: cfg.f64("priors.dropout"),
        }
    }
}

/// Rows are only filled for test hotspots; the harness reads no others.
fn test_rows<T>(
    dataset: &Dataset,
    mut f: impl FnMut(usize) -> CliResult<Vec<T>>,
) -> CliResult<Vec<Vec<T>>> {
    (0..dataset.hotspots.len())
        .map(|k| {
            if dataset.splits[k] == Split::Test {
                f(k)
            } else {
                Ok(Vec::new())
            }
        })
        .collect()
}

fn from_members(
    members: &[MemberPredictions],
    build: fn(&MemberPredictions) -> CoreResult<EncounterEstimate>,
) -> CliResult<Vec<EncounterEstimate>> {
    Ok(members.iter().map(build).collect::<CoreResult<_>>()?)
}

fn member_means(members: &[MemberPredictions]) -> Vec<f64> {
    members
        .iter()
        .map(|m| m.means().iter().sum::<f64>() / m.len() as f64)
        .collect()
}

fn unit_priors(means: &[f64], tau: f64) -> CliResult<Vec<EncounterEstimate>> {
    Ok(means
        .iter()
        .map(|&m| fixed_variance_prior(m, tau))
        .collect::<CoreResult<_>>()?)
}

fn prior_set_from_means(
    strategy: Strategy,
    means: Vec<Vec<f64>>,
    settings: &PriorSettings,
) -> CliResult<PriorSet> {
    Ok(match strategy {
        Strategy::FixedVariance => PriorSet::Beliefs(
            means
                .iter()
                .map(|row| unit_priors(row, settings.tau))
                .collect::<CliResult<_>>()?,
        ),
        Strategy::HistoricalVariance => PriorSet::Historical {
            means,
            max_history: settings.max_history,
        },
        Strategy::ModelStatic => PriorSet::Static(means),
        other => unreachable!("{other} is not built from point means"),
    })
}

fn needs_members(n: usize, what: &'static str) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::Config(format!("{what} must be >= 1")));
    }
    Ok(())
}

/// Priors for `strategy` under the run seed `seed`.
pub fn prior_set(
    strategy: Strategy,
    source: &Source,
    dataset: &Dataset,
    settings: &PriorSettings,
    seed: u64,
) -> CliResult<PriorSet> {
    if strategy == Strategy::MeanRateStatic {
        let baseline = mean_rate_baseline(dataset)?;
        return Ok(PriorSet::Static(test_rows(dataset, |_| {
            Ok(baseline.clone())
        })?));
    }
    match source {
        Source::Fabricated(truth) => fabricated(strategy, truth, settings, seed),
        Source::Model(models) => from_models(strategy, models, dataset, settings, seed),
        Source::Predictions(rows) => from_predictions(strategy, rows, dataset, settings),
    }
}

fn fabricated(
    strategy: Strategy,
    truth: &TruthTable,
    s: &PriorSettings,
    seed: u64,
) -> CliResult<PriorSet> {
    let prior_seed = derive_seed(seed, tag::PRIORS);
    let members = |m: usize, with_var: bool, stream: u64| {
        fabricate_members(truth, s.noise, m, with_var, derive_seed(prior_seed, stream))
    };
    let beliefs = |rows: Vec<Vec<MemberPredictions>>,
                   build: fn(&MemberPredictions) -> CoreResult<EncounterEstimate>|
     -> CliResult<PriorSet> {
        Ok(PriorSet::Beliefs(
            rows.iter()
                .map(|r| from_members(r, build))
                .collect::<CliResult<_>>()?,
        ))
    };
    match strategy {
        Strategy::MeanVariance => Ok(PriorSet::Beliefs(fabricate_from_truth(
            truth, s.noise, true, prior_seed,
        )?)),
        Strategy::FixedVariance | Strategy::HistoricalVariance | Strategy::ModelStatic => {
            let est = fabricate_from_truth(truth, s.noise, true, prior_seed)?;
            let means = est
                .iter()
                .map(|r| r.iter().map(EncounterEstimate::mean).collect())
                .collect();
            prior_set_from_means(strategy, means, s)
        }
        Strategy::DeepEnsemble => {
            needs_members(s.de_members, "priors.de_members")?;
            beliefs(members(s.de_members, false, 1)?, ensemble_prior)
        }
        Strategy::ShallowEnsemble => {
            needs_members(s.se_heads, "priors.se_heads")?;
            beliefs(members(s.se_heads, false, 2)?, ensemble_prior)
        }
        Strategy::McDropout => {
            needs_members(s.mcd_passes, "priors.mcd_passes")?;
            beliefs(members(s.mcd_passes, false, 3)?, ensemble_prior)
        }
        Strategy::HetReg => {
            needs_members(s.mcd_passes, "priors.mcd_passes")?;
            beliefs(members(s.mcd_passes, true, 4)?, hetreg_prior)
        }
        Strategy::MeanRateStatic => unreachable!(),
    }
}

fn features<'a>(dataset: &'a Dataset, k: usize) -> CliResult<&'a [f64]> {
    let h = &dataset.hotspots[k];
    h.features.as_deref().ok_or_else(|| {
        CliError::Usage(format!(
            "model priors need hotspot features, {} has none",
            h.hotspot_id
        ))
    })
}

fn dropout_members(
    model: &MvnModel,
    x: &[f64],
    s: &PriorSettings,
    rng: &mut PortableRng,
    with_var: bool,
) -> CliResult<Vec<MemberPredictions>> {
    needs_members(s.mcd_passes, "priors.mcd_passes")?;
    let passes = (0..s.mcd_passes)
        .map(|_| model.predict_with_dropout(x, s.dropout, rng))
        .collect::<CoreResult<Vec<_>>>()?;
    Ok((0..model.n_species())
        .map(|i| {
            MemberPredictions::new(
                passes.iter().map(|p| p.means[i]).collect(),
                with_var.then(|| passes.iter().map(|p| p.variances[i]).collect()),
            )
        })
        .collect::<CoreResult<_>>()?)
}

fn from_models(
    strategy: Strategy,
    models: &[MvnModel],
    dataset: &Dataset,
    s: &PriorSettings,
    seed: u64,
) -> CliResult<PriorSet> {
    let reference = models
        .first()
        .ok_or_else(|| CliError::Usage("model bundle is empty".into()))?;
    let dropout_rng = |k: usize| {
        PortableRng::derived(
            derive_seed(seed, tag::DROPOUT),
            fnv1a(dataset.hotspots[k].hotspot_id.as_bytes()),
        )
    };
    match strategy {
        Strategy::FixedVariance | Strategy::HistoricalVariance | Strategy::ModelStatic => {
            let means = test_rows(dataset, |k| {
                Ok(reference.predict(features(dataset, k)?)?.means)
            })?;
            prior_set_from_means(strategy, means, s)
        }
        Strategy::MeanVariance => Ok(PriorSet::Beliefs(test_rows(dataset, |k| {
            let p = reference.predict(features(dataset, k)?)?;
            Ok(p.means
                .iter()
                .zip(&p.variances)
                .map(|(&m, &v)| mvn_prior(m, v))
                .collect::<CoreResult<_>>()?)
        })?)),
        Strategy::DeepEnsemble => {
            needs_members(s.de_members, "priors.de_members")?;
            if models.len() < s.de_members {
                return Err(CliError::Usage(format!(
                    "DE needs {} models, the bundle holds {}",
                    s.de_members,
                    models.len()
                )));
            }
            Ok(PriorSet::Beliefs(test_rows(dataset, |k| {
                let x = features(dataset, k)?;
                let preds = models[..s.de_members]
                    .iter()
                    .map(|m| m.predict(x))
                    .collect::<CoreResult<Vec<_>>>()?;
                let members = (0..reference.n_species())
                    .map(|i| {
                        MemberPredictions::new(preds.iter().map(|p| p.means[i]).collect(), None)
                    })
                    .collect::<CoreResult<Vec<_>>>()?;
                from_members(&members, ensemble_prior)
            })?))
        }
        Strategy::McDropout | Strategy::HetReg => {
            let hetreg = strategy == Strategy::HetReg;
            Ok(PriorSet::Beliefs(test_rows(dataset, |k| {
                let members = dropout_members(
                    reference,
                    features(dataset, k)?,
                    s,
                    &mut dropout_rng(k),
                    hetreg,
                )?;
                from_members(&members, if hetreg { hetreg_prior } else { ensemble_prior })
            })?))
        }
        Strategy::ShallowEnsemble => Err(CliError::Usage(
            "SE needs multi-head outputs; supply them as member predictions".into(),
        )),
        Strategy::MeanRateStatic => unreachable!(),
    }
}

fn from_predictions(
    strategy: Strategy,
    rows: &[Option<Vec<MemberPredictions>>],
    dataset: &Dataset,
    s: &PriorSettings,
) -> CliResult<PriorSet> {
    let row = |k: usize| -> CliResult<&Vec<MemberPredictions>> {
        rows[k].as_ref().ok_or_else(|| {
            CliError::Core(
                encounter_core::Error::Empty("member predictions")
                    .at_hotspot(&dataset.hotspots[k].hotspot_id),
            )
        })
    };
    let with_variances = |k: usize| -> CliResult<&Vec<MemberPredictions>> {
        let r = row(k)?;
        if r.iter().any(|m| m.variances().is_none()) {
            return Err(CliError::Usage(format!(
                "{strategy} needs member variances, hotspot {} has none",
                dataset.hotspots[k].hotspot_id
            )));
        }
        Ok(r)
    };
    match strategy {
        Strategy::FixedVariance | Strategy::HistoricalVariance | Strategy::ModelStatic => {
            let means = test_rows(dataset, |k| Ok(member_means(row(k)?)))?;
            prior_set_from_means(strategy, means, s)
        }
        Strategy::DeepEnsemble | Strategy::ShallowEnsemble | Strategy::McDropout => {
            Ok(PriorSet::Beliefs(test_rows(dataset, |k| {
                from_members(row(k)?, ensemble_prior)
            })?))
        }
        Strategy::HetReg => Ok(PriorSet::Beliefs(test_rows(dataset, |k| {
            from_members(with_variances(k)?, hetreg_prior)
        })?)),
        Strategy::MeanVariance => Ok(PriorSet::Beliefs(test_rows(dataset, |k| {
            with_variances(k)?
                .iter()
                .map(|m| {
                    let n = m.len() as f64;
                    let mean = m.means().iter().sum::<f64>() / n;
                    let var = m.variances().unwrap_or_default().iter().sum::<f64>() / n;
                    Ok(mvn_prior(mean, var)?)
                })
                .collect()
        })?)),
        Strategy::MeanRateStatic => unreachable!(),
    }
}
