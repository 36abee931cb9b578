//! Fixtures shared by the benchmarks.

use encounter_core::priors::fixed_variance_prior;
use encounter_core::{
    generate_world, EncounterEstimate, EpisodeConfig, PriorSet, SyntheticWorld, WorldConfig,
};

/// A small synthetic world with enough checklists for a ten-step episode.
pub fn small_world(seed: u64) -> SyntheticWorld {
    generate_world(&WorldConfig {
        n_hotspots: 60,
        n_species: 50,
        checklists_per_hotspot: 40,
        seed,
        ..WorldConfig::default()
    })
    .expect("valid world config")
}

/// Fixed-variance priors centred on the world's true rates.
pub fn truth_priors(world: &SyntheticWorld) -> PriorSet {
    let rows = world
        .truth
        .rates
        .iter()
        .map(|row| {
            row.iter()
                .map(|&r| fixed_variance_prior(r, 0.5).expect("rate in [0, 1]"))
                .collect::<Vec<EncounterEstimate>>()
        })
        .collect();
    PriorSet::Beliefs(rows)
}

pub fn episode_config(jobs: usize) -> EpisodeConfig {
    EpisodeConfig {
        seeds: vec![1, 2, 3],
        jobs,
        ..EpisodeConfig::default()
    }
}
