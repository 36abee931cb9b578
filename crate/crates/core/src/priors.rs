//! Prior builders, one per uncertainty strategy.
//!
//! Every builder returns an [`EncounterEstimate`] whose variance has been
//! raised to [`VARIANCE_FLOOR`](crate::beta::VARIANCE_FLOOR) and capped at
//! `mean * (1 - mean)`. Spreads over members and detection histories use the
//! population variance (divide by M), so a single member has zero spread.

use std::collections::BTreeMap;
use std::path::Path;

use crate::beta::EncounterEstimate;
use crate::error::{Error, Result};
use crate::observations::{csv_error, csv_reader, expect_header, malformed, parse_f64, Dataset};

/// Outputs of M ensemble members, dropout passes or heads for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberPredictions {
    means: Vec<f64>,
    variances: Option<Vec<f64>>,
}

impl MemberPredictions {
    pub fn new(means: Vec<f64>, variances: Option<Vec<f64>>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::Empty("member predictions"));
        }
        for &m in &means {
            if !m.is_finite() || !(0.0..=1.0).contains(&m) {
                return Err(Error::param("member mean", m, "must lie in [0, 1]"));
            }
        }
        if let Some(vars) = &variances {
            if vars.len() != means.len() {
                return Err(Error::LengthMismatch {
                    expected: means.len(),
                    found: vars.len(),
                });
            }
            for &v in vars {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::param(
                        "member variance",
                        v,
                        "must be finite and >= 0",
                    ));
                }
            }
        }
        Ok(Self { means, variances })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> Option<&[f64]> {
        self.variances.as_deref()
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_variance(xs: &[f64]) -> f64 {
    let m = mean_of(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, v, "must lie in [0, 1]"));
    }
    Ok(())
}

/// Fixed Variance: `variance = tau * mean * (1 - mean)`.
pub fn fixed_variance_prior(mean: f64, tau: f64) -> Result<EncounterEstimate> {
    check_rate("mean", mean)?;
    if !tau.is_finite() || tau <= 0.0 || tau > 1.0 {
        return Err(Error::param("tau", tau, "must lie in (0, 1]"));
    }
    let variance = tau * mean * (1.0 - mean);
    if tau == 1.0 {
        // Kept exactly on the bound so moment matching yields Beta(0, 0).
        return EncounterEstimate::new(mean, variance);
    }
    EncounterEstimate::clamped(mean, variance)
}

/// Historical Variance: the population variance of the most recent
/// `max_history` detection bits. An empty history falls back to Fixed
/// Variance with `tau = 1`.
pub fn historical_variance_prior(
    mean: f64,
    history: &[bool],
    max_history: usize,
) -> Result<EncounterEstimate> {
    check_rate("mean", mean)?;
    if max_history == 0 {
        return Err(Error::param("max_history", 0.0, "must be >= 1"));
    }
    if history.is_empty() {
        return fixed_variance_prior(mean, 1.0);
    }
    let recent = &history[history.len().saturating_sub(max_history)..];
    let hits = recent.iter().filter(|&&b| b).count() as f64;
    let freq = hits / recent.len() as f64;
    EncounterEstimate::clamped(mean, freq * (1.0 - freq))
}

/// Deep Ensemble, Shallow Ensemble and MC Dropout aggregation: mean of member
/// means, spread of member means as variance.
pub fn ensemble_prior(preds: &MemberPredictions) -> Result<EncounterEstimate> {
    if preds.variances.is_some() {
        return Err(Error::param(
            "member variances",
            preds.len() as f64,
            "ensemble aggregation takes means only",
        ));
    }
    EncounterEstimate::clamped(mean_of(&preds.means), population_variance(&preds.means))
}

/// Mean-Variance Network output, clamped into the valid range.
pub fn mvn_prior(mean: f64, variance: f64) -> Result<EncounterEstimate> {
    EncounterEstimate::clamped(mean, variance)
}

/// Heteroscedastic regression: epistemic spread of member means plus the
/// average aleatoric variance.
pub fn hetreg_prior(preds: &MemberPredictions) -> Result<EncounterEstimate> {
    let variances = preds.variances.as_deref().ok_or(Error::param(
        "member variances",
        0.0,
        "required for heteroscedastic aggregation",
    ))?;
    let epistemic = population_variance(&preds.means);
    let aleatoric = mean_of(variances);
    EncounterEstimate::clamped(mean_of(&preds.means), epistemic + aleatoric)
}

/// Header of a member-predictions file. `variance` may be left empty.
pub const PREDICTIONS_HEADER: [&str; 5] =
    ["hotspot_id", "species_id", "member", "mean", "variance"];

/// Reads externally produced member outputs, one row per
/// (hotspot, species, member). Rows are aligned with `dataset.hotspots`;
/// hotspots absent from the file get `None`. A listed hotspot must cover
/// every species with the members `0..M`, and either all or none of its
/// rows carry a variance.
pub fn read_member_predictions(
    path: &Path,
    dataset: &Dataset,
) -> Result<Vec<Option<Vec<MemberPredictions>>>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    expect_header(path, &headers, &PREDICTIONS_HEADER[..4])?;
    type Cell = BTreeMap<usize, (f64, Option<f64>)>;
    let mut cells: Vec<Option<Vec<Cell>>> = vec![None; dataset.hotspots.len()];
    let index: BTreeMap<&str, usize> = dataset
        .hotspots
        .iter()
        .enumerate()
        .map(|(k, h)| (h.hotspot_id.as_str(), k))
        .collect();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let hk = *index.get(&rec[0]).ok_or_else(|| Error::UnknownHotspot {
            path: path.to_path_buf(),
            line,
            id: rec[0].to_string(),
        })?;
        let sp = dataset
            .species
            .position(&rec[1])
            .ok_or_else(|| Error::UnknownSpecies {
                path: path.to_path_buf(),
                line,
                id: rec[1].to_string(),
            })?;
        let member = rec[2]
            .parse::<usize>()
            .map_err(|_| malformed(path, line, format!("invalid member index `{}`", &rec[2])))?;
        let mean = parse_f64(path, line, &rec[3], "mean")?;
        let variance = match rec.get(4) {
            None | Some("") => None,
            Some(v) => Some(parse_f64(path, line, v, "variance")?),
        };
        let row = cells[hk].get_or_insert_with(|| vec![Cell::new(); dataset.n_species()]);
        if row[sp].insert(member, (mean, variance)).is_some() {
            return Err(malformed(
                path,
                line,
                format!(
                    "duplicate prediction for {}, {}, member {member}",
                    &rec[0], &rec[1]
                ),
            ));
        }
    }
    cells
        .into_iter()
        .zip(&dataset.hotspots)
        .map(|(row, h)| {
            let Some(row) = row else { return Ok(None) };
            let bad = |msg: &str| malformed(path, 0, format!("hotspot {}: {msg}", h.hotspot_id));
            let m = row[0].len();
            row.into_iter()
                .map(|cell| {
                    if cell.len() != m || cell.keys().copied().ne(0..m) {
                        return Err(bad("every species needs members 0..M"));
                    }
                    let means = cell.values().map(|v| v.0).collect();
                    let vars: Option<Vec<f64>> = cell.values().map(|v| v.1).collect();
                    if vars.is_none() && cell.values().any(|v| v.1.is_some()) {
                        return Err(bad("variance given for only some members"));
                    }
                    MemberPredictions::new(means, vars).map_err(|e| bad(&e.to_string()))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect()
}
