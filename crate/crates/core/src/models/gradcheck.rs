//! Central finite-difference validation of analytic gradients.

use super::loss::Loss;
use super::network::{Batch, MvnModel};
use crate::error::{Error, Result};
use crate::rng::PortableRng;

/// Denominator floor for relative errors, so parameters whose true gradient
/// is ~0 are judged on absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Anything with a flat parameter vector, a scalar loss and its gradient.
pub trait Objective {
    fn parameters(&self) -> Vec<f64>;
    fn loss_at(&self, params: &[f64]) -> Result<f64>;
    fn gradient_at(&self, params: &[f64]) -> Result<Vec<f64>>;
}

/// An [`MvnModel`] evaluated on a fixed batch under one loss.
#[derive(Debug, Clone)]
pub struct ModelObjective<'a> {
    pub model: &'a MvnModel,
    pub batch: &'a Batch,
    pub loss: Loss,
    pub warmup: bool,
}

impl ModelObjective<'_> {
    fn with(&self, params: &[f64]) -> Result<MvnModel> {
        let mut m = self.model.clone();
        m.set_params(params)?;
        Ok(m)
    }
}

impl Objective for ModelObjective<'_> {
    fn parameters(&self) -> Vec<f64> {
        self.model.params()
    }

    fn loss_at(&self, params: &[f64]) -> Result<f64> {
        self.with(params)?.loss(self.batch, self.loss, self.warmup)
    }

    fn gradient_at(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .with(params)?
            .loss_and_gradient(self.batch, self.loss, self.warmup)?
            .1)
    }
}

/// Compares the analytic gradient with central differences on `sample`
/// randomly chosen parameters (all of them when `sample` covers the vector)
/// and returns the largest relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check<O: Objective>(
    objective: &O,
    epsilon: f64,
    sample: usize,
    seed: u64,
) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::param("epsilon", epsilon, "must lie in [1e-6, 1e-3]"));
    }
    let params = objective.parameters();
    if params.is_empty() {
        return Err(Error::Empty("parameter vector"));
    }
    let analytic = objective.gradient_at(&params)?;
    let mut indices: Vec<usize> = (0..params.len()).collect();
    if sample < params.len() {
        PortableRng::new(seed).shuffle(&mut indices);
        indices.truncate(sample.max(1));
    }
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for i in indices {
        probe[i] = params[i] + epsilon;
        let up = objective.loss_at(&probe)?;
        probe[i] = params[i] - epsilon;
        let down = objective.loss_at(&probe)?;
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = analytic[i]
            .abs()
            .max(numeric.abs())
            .max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
