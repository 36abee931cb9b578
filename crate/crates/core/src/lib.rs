//! Beta-conjugate updating of species encounter-rate priors at birding
//! hotspots, with prior builders, a synthetic world generator, metrics, small
//! prior models and an episodic evaluation harness.

pub mod beta;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod observations;
pub mod priors;
pub mod rng;
pub mod synthetic;

pub use beta::{
    beta_moments, blend, blend_weight, match_moments, moment_match, BetaParams, EncounterEstimate,
    PosteriorCell,
};
pub use error::{Error, Result};
pub use harness::{
    blend_sweep, episode_partition, run_benchmark, run_episode, run_episode_with, EpisodeConfig,
    GroundTruth, MetricTrajectory, PriorSet, Strategy,
};
pub use metrics::{HotspotScore, MetricReport};
pub use observations::{
    load_dataset, save_dataset, Checklist, Dataset, DatasetPaths, HotspotRecord, Split,
};
pub use rng::PortableRng;
pub use synthetic::{generate_world, SyntheticWorld, TruthTable, WorldConfig};
