//! Beta beliefs over a single encounter rate.
//!
//! A prior belief arrives as a `(mean, variance)` pair, is moment-matched into
//! Beta shape parameters, and then absorbs presence/absence observations by
//! adding pseudo-counts. `Beta(0, 0)` is allowed as the improper
//! non-informative prior; it has no moments until it has seen data.

use crate::error::{Error, Result};

/// Means are clamped into `[MEAN_CLAMP, 1 - MEAN_CLAMP]` before moment matching.
pub const MEAN_CLAMP: f64 = 1e-6;
/// Smallest variance handed to moment matching.
pub const VARIANCE_FLOOR: f64 = 1e-9;
/// Variances may exceed `mean * (1 - mean)` by this much and still be clamped.
pub const VARIANCE_TOLERANCE: f64 = 1e-9;

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::param("alpha", alpha, "must be finite and >= 0"));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::param("beta", beta, "must be finite and >= 0"));
        }
        Ok(Self { alpha, beta })
    }

    /// The improper `Beta(0, 0)` prior.
    pub const fn improper() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn total(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn is_improper(&self) -> bool {
        self.total() == 0.0
    }
}

/// A `(mean, variance)` belief about one encounter rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncounterEstimate {
    mean: f64,
    variance: f64,
}

impl EncounterEstimate {
    /// Validates `0 <= mean <= 1` and `0 <= variance <= mean * (1 - mean)`.
    /// A variance above the bound by at most [`VARIANCE_TOLERANCE`] is
    /// clamped down to it.
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
            return Err(Error::param("mean", mean, "must lie in [0, 1]"));
        }
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::param(
                "variance",
                variance,
                "must be finite and >= 0",
            ));
        }
        let bound = mean * (1.0 - mean);
        if variance > bound + VARIANCE_TOLERANCE {
            return Err(Error::VarianceOutOfBounds { mean, variance });
        }
        Ok(Self {
            mean,
            variance: variance.min(bound),
        })
    }

    /// Builds an estimate from any finite mean in `[0, 1]` and a nonnegative
    /// variance by raising the variance to [`VARIANCE_FLOOR`] and then capping
    /// it at `mean * (1 - mean)`.
    pub fn clamped(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
            return Err(Error::param("mean", mean, "must lie in [0, 1]"));
        }
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::param(
                "variance",
                variance,
                "must be finite and >= 0",
            ));
        }
        let variance = variance.max(VARIANCE_FLOOR).min(mean * (1.0 - mean));
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Moment-matches a `(mean, variance)` belief to Beta shape parameters.
///
/// A variance at the `mean * (1 - mean)` bound maps to `Beta(0, 0)`. Below the
/// bound the mean is clamped into `[1e-6, 1 - 1e-6]` and the variance into
/// `[1e-9, mean * (1 - mean)]` before applying
/// `alpha = mean * k`, `beta = (1 - mean) * k` with `k = mean(1-mean)/var - 1`.
pub fn moment_match(est: EncounterEstimate) -> Result<BetaParams> {
    match_moments(est.mean, est.variance)
}

/// Like [`moment_match`] but takes raw numbers, so out-of-bound inputs can be
/// rejected instead of being unrepresentable.
pub fn match_moments(mean: f64, variance: f64) -> Result<BetaParams> {
    if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
        return Err(Error::param("mean", mean, "must lie in [0, 1]"));
    }
    if !variance.is_finite() || variance < 0.0 {
        return Err(Error::param(
            "variance",
            variance,
            "must be finite and >= 0",
        ));
    }
    let bound = mean * (1.0 - mean);
    if variance > bound + VARIANCE_TOLERANCE {
        return Err(Error::VarianceOutOfBounds { mean, variance });
    }
    if variance >= bound {
        return Ok(BetaParams::improper());
    }
    let mean = mean.clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP);
    let variance = variance.clamp(VARIANCE_FLOOR, mean * (1.0 - mean));
    let concentration = (mean * (1.0 - mean) / variance - 1.0).max(0.0);
    BetaParams::new(mean * concentration, (1.0 - mean) * concentration)
}

/// Mean and variance of a proper Beta distribution.
pub fn beta_moments(p: BetaParams) -> Result<EncounterEstimate> {
    let total = p.total();
    if total <= 0.0 {
        return Err(Error::ImproperPrior);
    }
    let mean = p.alpha / total;
    let variance = p.alpha * p.beta / (total * total * (total + 1.0));
    EncounterEstimate::new(mean, variance)
}

/// Posterior state for one species at one hotspot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCell {
    prior_mean: f64,
    params: BetaParams,
    n_updates: u64,
}

impl PosteriorCell {
    pub fn new(prior_mean: f64, params: BetaParams) -> Result<Self> {
        if !prior_mean.is_finite() || !(0.0..=1.0).contains(&prior_mean) {
            return Err(Error::param("prior_mean", prior_mean, "must lie in [0, 1]"));
        }
        Ok(Self {
            prior_mean,
            params,
            n_updates: 0,
        })
    }

    /// Moment-matches `prior` and wraps it as an untouched cell.
    pub fn from_estimate(prior: EncounterEstimate) -> Result<Self> {
        Self::new(prior.mean(), moment_match(prior)?)
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn params(&self) -> BetaParams {
        self.params
    }

    pub fn n_updates(&self) -> u64 {
        self.n_updates
    }

    /// Absorbs one checklist's indicator for this species.
    #[must_use]
    pub fn update_one(self, detected: bool) -> Self {
        let BetaParams { alpha, beta } = self.params;
        let params = if detected {
            BetaParams {
                alpha: alpha + 1.0,
                beta,
            }
        } else {
            BetaParams {
                alpha,
                beta: beta + 1.0,
            }
        };
        Self {
            params,
            n_updates: self.n_updates + 1,
            ..self
        }
    }

    /// Absorbs `trials` checklists of which `detections` recorded the species.
    pub fn update_batch(self, detections: u64, trials: u64) -> Result<Self> {
        if detections > trials {
            return Err(Error::DetectionsExceedTrials { detections, trials });
        }
        Ok(Self {
            params: BetaParams {
                alpha: add_ones(self.params.alpha, detections),
                beta: add_ones(self.params.beta, trials - detections),
            },
            n_updates: self.n_updates + trials,
            ..self
        })
    }

    /// Posterior mean, or the prior mean while the cell is an untouched
    /// improper prior.
    pub fn point_estimate(&self) -> f64 {
        let total = self.params.total();
        if total > 0.0 {
            self.params.alpha / total
        } else {
            self.prior_mean
        }
    }
}

/// `x + n` rounded exactly as `n` successive additions of one would be.
fn add_ones(x: f64, n: u64) -> f64 {
    const EXACT: f64 = (1u64 << 53) as f64;
    if x.fract() == 0.0 && x + (n as f64) < EXACT && n < (1 << 53) {
        x + n as f64
    } else {
        (0..n).fold(x, |acc, _| acc + 1.0)
    }
}

/// Blending weight `1 - exp(-lambda * t)`.
pub fn blend_weight(lambda: f64, t: u64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 || lambda > 1.0 {
        return Err(Error::param("lambda", lambda, "must lie in (0, 1]"));
    }
    Ok(-libm::expm1(-lambda * t as f64))
}

/// `(1 - weight) * prior_rate + weight * posterior_rate`.
pub fn blend(prior_rate: f64, posterior_rate: f64, weight: f64) -> Result<f64> {
    for (name, v) in [
        ("prior_rate", prior_rate),
        ("posterior_rate", posterior_rate),
        ("weight", weight),
    ] {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::param(name, v, "must lie in [0, 1]"));
        }
    }
    Ok(((1.0 - weight) * prior_rate + weight * posterior_rate).clamp(0.0, 1.0))
}
