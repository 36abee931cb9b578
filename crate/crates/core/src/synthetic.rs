//! Synthetic worlds with known encounter rates.
//!
//! Generator, for hotspot `k` and species `i`:
//!
//! 1. features `x_k ~ N(0, I_D)`;
//! 2. species map `w_i ~ N(0, I_D / D)`, bias `b_i ~ N(-1, 1)`;
//! 3. bulk rate `sigmoid(b_i + w_i . x_k + e_ki)` with jitter `e_ki ~ N(0, 0.5^2)`;
//! 4. the cell is forced to zero with probability `rate_sparsity`;
//! 5. each checklist bit is an independent `Bernoulli(rate)` draw.
//!
//! Every stage draws from its own derived [`PortableRng`] stream, so a world is
//! a pure function of its config.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::beta::EncounterEstimate;
use crate::error::{Error, Result};
use crate::observations::{assign_splits, Checklist, Dataset, HotspotRecord, SpeciesIndex};
use crate::priors::MemberPredictions;
use crate::rng::{self, derive_seed, PortableRng};

/// Variance given to every cell by the overconfident fabricated prior.
pub const OVERCONFIDENT_VARIANCE: f64 = 1e-4;

const JITTER_SD: f64 = 0.5;
const BIAS_MEAN: f64 = -1.0;
const BIAS_SD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub n_hotspots: usize,
    pub n_species: usize,
    pub feature_dim: usize,
    pub rate_sparsity: f64,
    pub seed: u64,
    pub prior_noise: f64,
    pub checklists_per_hotspot: usize,
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_hotspots: 200,
            n_species: 50,
            feature_dim: 8,
            rate_sparsity: 0.6,
            seed: 42,
            prior_noise: 0.2,
            checklists_per_hotspot: 40,
            test_fraction: 0.5,
            val_fraction: 0.2,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_hotspots", self.n_hotspots),
            ("n_species", self.n_species),
            ("feature_dim", self.feature_dim),
            ("checklists_per_hotspot", self.checklists_per_hotspot),
        ] {
            if v == 0 {
                return Err(Error::param(name, 0.0, "must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.rate_sparsity) {
            return Err(Error::param(
                "rate_sparsity",
                self.rate_sparsity,
                "must lie in [0, 1)",
            ));
        }
        if !self.prior_noise.is_finite() || self.prior_noise < 0.0 {
            return Err(Error::param(
                "prior_noise",
                self.prior_noise,
                "must be >= 0",
            ));
        }
        Ok(())
    }
}

/// Known rates, one row per hotspot aligned with a dataset's hotspot order.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub rates: Vec<Vec<f64>>,
}

impl TruthTable {
    pub fn row(&self, hotspot: usize) -> &[f64] {
        &self.rates[hotspot]
    }

    pub fn zero_fraction(&self) -> f64 {
        let cells = self.rates.iter().map(Vec::len).sum::<usize>();
        let zeros = self.rates.iter().flatten().filter(|&&r| r == 0.0).count();
        zeros as f64 / cells as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub truth: TruthTable,
    pub features: Vec<Vec<f64>>,
    pub dataset: Dataset,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn hotspot_id(k: usize) -> String {
    format!("H{k:04}")
}

pub fn species_id(i: usize) -> String {
    format!("S{i:04}")
}

pub fn generate_world(cfg: &WorldConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let (k_n, n_s, dim) = (cfg.n_hotspots, cfg.n_species, cfg.feature_dim);

    let mut feat_rng = PortableRng::derived(cfg.seed, rng::tag::FEATURES);
    let features: Vec<Vec<f64>> = (0..k_n)
        .map(|_| (0..dim).map(|_| feat_rng.standard_normal()).collect())
        .collect();

    let mut map_rng = PortableRng::derived(cfg.seed, rng::tag::SPECIES_MAP);
    let scale = 1.0 / (dim as f64).sqrt();
    let weights: Vec<Vec<f64>> = (0..n_s)
        .map(|_| (0..dim).map(|_| map_rng.normal(0.0, scale)).collect())
        .collect();
    let biases: Vec<f64> = (0..n_s)
        .map(|_| map_rng.normal(BIAS_MEAN, BIAS_SD))
        .collect();

    let mut jitter_rng = PortableRng::derived(cfg.seed, rng::tag::JITTER);
    let mut sparse_rng = PortableRng::derived(cfg.seed, rng::tag::SPARSITY);
    let rates: Vec<Vec<f64>> = features
        .iter()
        .map(|x| {
            (0..n_s)
                .map(|i| {
                    let linear: f64 = weights[i].iter().zip(x).map(|(w, f)| w * f).sum();
                    let bulk = sigmoid(biases[i] + linear + jitter_rng.normal(0.0, JITTER_SD));
                    if sparse_rng.bernoulli(cfg.rate_sparsity) {
                        0.0
                    } else {
                        bulk
                    }
                })
                .collect()
        })
        .collect();

    let mut coord_rng = PortableRng::derived(cfg.seed, rng::tag::COORDINATES);
    let checklist_seed = derive_seed(cfg.seed, rng::tag::CHECKLISTS);
    let per = cfg.checklists_per_hotspot;
    let hotspots = (0..k_n)
        .map(|k| {
            let lat = coord_rng.uniform_range(-35.0, 5.0);
            let lon = coord_rng.uniform_range(15.0, 40.0);
            let id = hotspot_id(k);
            let mut h = HotspotRecord::new(id.clone(), lat, lon)?;
            h.features = Some(features[k].clone());
            h.checklists = (0..per)
                .map(|j| {
                    let mut c = sample_checklist(&rates[k], checklist_seed, (k * per + j) as u64);
                    c.checklist_id = format!("{id}-C{j:04}");
                    c
                })
                .collect();
            Ok(h)
        })
        .collect::<Result<Vec<_>>>()?;

    let species = SpeciesIndex::new((0..n_s).map(species_id).collect())?;
    let splits = assign_splits(&hotspots, 0, cfg.test_fraction, cfg.val_fraction, cfg.seed)?;
    let dataset = Dataset::new(species, hotspots, splits)?;
    Ok(SyntheticWorld {
        config: cfg.clone(),
        truth: TruthTable { rates },
        features,
        dataset,
    })
}

/// One checklist with independent `Bernoulli(rate_i)` bits. The draw is a
/// function of `(seed, draw_index)` only.
pub fn sample_checklist(truth_row: &[f64], seed: u64, draw_index: u64) -> Checklist {
    let mut rng = PortableRng::derived(seed, draw_index);
    let detections = truth_row.iter().map(|&p| rng.bernoulli(p)).collect();
    Checklist::new(format!("draw-{draw_index}"), detections)
}

/// Model-like priors: `mean = clip(truth + N(0, prior_noise^2), 0, 1)`.
/// Calibrated priors carry `prior_noise^2` as variance, overconfident ones
/// carry [`OVERCONFIDENT_VARIANCE`]; both are clamped to the Beta bound.
pub fn fabricate_priors(
    world: &SyntheticWorld,
    prior_noise: f64,
    calibrated: bool,
    seed: u64,
) -> Result<Vec<Vec<EncounterEstimate>>> {
    fabricate_from_truth(&world.truth, prior_noise, calibrated, seed)
}

pub fn fabricate_from_truth(
    truth: &TruthTable,
    prior_noise: f64,
    calibrated: bool,
    seed: u64,
) -> Result<Vec<Vec<EncounterEstimate>>> {
    if !prior_noise.is_finite() || prior_noise < 0.0 {
        return Err(Error::param("prior_noise", prior_noise, "must be >= 0"));
    }
    let variance = if calibrated {
        prior_noise * prior_noise
    } else {
        OVERCONFIDENT_VARIANCE
    };
    let mut rng = PortableRng::derived(seed, rng::tag::PRIORS);
    truth
        .rates
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    let mean = rng.normal(p, prior_noise).clamp(0.0, 1.0);
                    EncounterEstimate::clamped(mean, variance)
                })
                .collect()
        })
        .collect()
}

/// Simulated ensemble members: every member shares one offset
/// `N(0, prior_noise^2 / 2)` per cell and adds its own `N(0, prior_noise^2 / 2)`,
/// so member means carry the full `prior_noise^2` error while their spread
/// only sees half of it. With `with_variances`, each member also reports the
/// aleatoric half `prior_noise^2 / 2`.
pub fn fabricate_members(
    truth: &TruthTable,
    prior_noise: f64,
    members: usize,
    with_variances: bool,
    seed: u64,
) -> Result<Vec<Vec<MemberPredictions>>> {
    if members == 0 {
        return Err(Error::param("members", 0.0, "must be >= 1"));
    }
    if !prior_noise.is_finite() || prior_noise < 0.0 {
        return Err(Error::param("prior_noise", prior_noise, "must be >= 0"));
    }
    let half_sd = prior_noise / std::f64::consts::SQRT_2;
    let mut rng = PortableRng::derived(seed, rng::tag::MEMBERS);
    truth
        .rates
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    let shared = rng.normal(0.0, half_sd);
                    let means = (0..members)
                        .map(|_| (p + shared + rng.normal(0.0, half_sd)).clamp(0.0, 1.0))
                        .collect();
                    let vars = with_variances.then(|| vec![half_sd * half_sd; members]);
                    MemberPredictions::new(means, vars)
                })
                .collect()
        })
        .collect()
}

/// Writes `hotspot_id,species_id,rate`.
pub fn write_truth(path: &Path, dataset: &Dataset, truth: &TruthTable) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "hotspot_id,species_id,rate").map_err(io)?;
    for (h, row) in dataset.hotspots.iter().zip(&truth.rates) {
        for (name, rate) in dataset.species.names().iter().zip(row) {
            writeln!(w, "{},{},{}", h.hotspot_id, name, rate).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads a truth file and aligns it with `dataset`. Every (hotspot, species)
/// cell must be present exactly once.
pub fn read_truth(path: &Path, dataset: &Dataset) -> Result<TruthTable> {
    let file = File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let malformed = |line: u64, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let positions: HashMap<&str, usize> = dataset
        .hotspots
        .iter()
        .enumerate()
        .map(|(k, h)| (h.hotspot_id.as_str(), k))
        .collect();
    let n = dataset.n_species();
    let mut rates = vec![vec![f64::NAN; n]; dataset.hotspots.len()];
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["hotspot_id", "species_id", "rate"] {
        return Err(malformed(
            1,
            "expected header `hotspot_id,species_id,rate`".into(),
        ));
    }
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let k = *positions
            .get(&rec[0])
            .ok_or_else(|| Error::UnknownHotspot {
                path: path.to_path_buf(),
                line,
                id: rec[0].to_string(),
            })?;
        let i = dataset
            .species
            .position(&rec[1])
            .ok_or_else(|| Error::UnknownSpecies {
                path: path.to_path_buf(),
                line,
                id: rec[1].to_string(),
            })?;
        let rate: f64 = rec[2]
            .parse()
            .ok()
            .filter(|r| (0.0..=1.0).contains(r))
            .ok_or_else(|| malformed(line, format!("invalid rate `{}`", &rec[2])))?;
        if !rates[k][i].is_nan() {
            return Err(malformed(line, "duplicate truth cell".into()));
        }
        rates[k][i] = rate;
    }
    if rates.iter().flatten().any(|r| r.is_nan()) {
        return Err(malformed(0, "truth table does not cover every cell".into()));
    }
    Ok(TruthTable { rates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::VARIANCE_FLOOR;
    use crate::observations::empirical_rates;

    fn small() -> WorldConfig {
        WorldConfig {
            n_hotspots: 6,
            n_species: 4,
            feature_dim: 3,
            checklists_per_hotspot: 20,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut cfg = small();
        cfg.rate_sparsity = 1.0;
        assert!(generate_world(&cfg).is_err());
        let cfg = WorldConfig {
            n_hotspots: 0,
            ..small()
        };
        assert!(generate_world(&cfg).is_err());
        let cfg = WorldConfig {
            n_species: 0,
            ..small()
        };
        assert!(generate_world(&cfg).is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            generate_world(&small()).unwrap(),
            generate_world(&small()).unwrap()
        );
        let other = WorldConfig {
            seed: 43,
            ..small()
        };
        assert_ne!(
            generate_world(&small()).unwrap().truth,
            generate_world(&other).unwrap().truth
        );
    }

    #[test]
    fn sparsity_fraction() {
        let cfg = WorldConfig {
            n_hotspots: 200,
            n_species: 50,
            seed: 42,
            rate_sparsity: 0.6,
            checklists_per_hotspot: 1,
            ..WorldConfig::default()
        };
        let world = generate_world(&cfg).unwrap();
        let frac = world.truth.zero_fraction();
        assert!((frac - 0.6).abs() < 0.03, "zero fraction {frac}");
    }

    #[test]
    fn degenerate_bernoulli_bits() {
        for draw in 0..50 {
            let c = sample_checklist(&[0.0, 1.0], 9, draw);
            assert_eq!(c.detections, vec![false, true]);
        }
    }

    #[test]
    fn bernoulli_frequency() {
        let hits = (0..10_000)
            .filter(|&d| sample_checklist(&[0.5], 1, d).detections[0])
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.015, "{freq}");
        assert_eq!(
            sample_checklist(&[0.5; 8], 3, 17),
            sample_checklist(&[0.5; 8], 3, 17)
        );
    }

    #[test]
    fn empirical_rates_approach_truth() {
        let cfg = WorldConfig {
            n_hotspots: 20,
            n_species: 10,
            checklists_per_hotspot: 1000,
            ..WorldConfig::default()
        };
        let world = generate_world(&cfg).unwrap();
        let mut worst: f64 = 0.0;
        for (h, row) in world.dataset.hotspots.iter().zip(&world.truth.rates) {
            for (e, t) in empirical_rates(h).unwrap().iter().zip(row) {
                worst = worst.max((e - t).abs());
            }
        }
        assert!(worst < 0.05, "max deviation {worst}");
    }

    #[test]
    fn fabricated_prior_examples() {
        let world = generate_world(&small()).unwrap();
        let exact = fabricate_priors(&world, 0.0, true, 1).unwrap();
        for (row, truth) in exact.iter().zip(&world.truth.rates) {
            for (e, &t) in row.iter().zip(truth) {
                assert_eq!(e.mean(), t);
                assert_eq!(e.variance(), VARIANCE_FLOOR.min(t * (1.0 - t)));
            }
        }
        let calibrated = fabricate_priors(&world, 0.2, true, 1).unwrap();
        let over = fabricate_priors(&world, 0.2, false, 1).unwrap();
        for (c_row, o_row) in calibrated.iter().zip(&over) {
            for (c, o) in c_row.iter().zip(o_row) {
                let bound = c.mean() * (1.0 - c.mean());
                assert_eq!(c.variance(), 0.2f64.powi(2).max(VARIANCE_FLOOR).min(bound));
                assert_eq!(c.mean(), o.mean());
                assert_eq!(o.variance(), OVERCONFIDENT_VARIANCE.min(bound));
            }
        }
    }

    #[test]
    fn fabricated_members_shape() {
        let world = generate_world(&small()).unwrap();
        let members = fabricate_members(&world.truth, 0.2, 5, true, 3).unwrap();
        assert_eq!(members.len(), 6);
        assert!(members
            .iter()
            .flatten()
            .all(|m| m.len() == 5 && m.variances().is_some()));
        assert!(fabricate_members(&world.truth, 0.2, 0, false, 3).is_err());
    }

    #[test]
    fn truth_file_roundtrip() {
        let world = generate_world(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        write_truth(&path, &world.dataset, &world.truth).unwrap();
        assert_eq!(read_truth(&path, &world.dataset).unwrap(), world.truth);
    }
}
