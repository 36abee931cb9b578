//! Mini-batch gradient descent for [`MvnModel`].

use super::loss::Loss;
use super::network::{Batch, MvnModel};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, PortableRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Leading epochs during which the variance head is bypassed.
    pub warmup_epochs: usize,
    pub lambda_mu: f64,
    pub lambda_sigma: f64,
    pub hidden: usize,
    pub loss: TrainLoss,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainLoss {
    CrossEntropy,
    GaussianNll,
    GaussianNllRegularized,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 50,
            warmup_epochs: 5,
            lambda_mu: 0.1,
            lambda_sigma: 0.1,
            hidden: 64,
            loss: TrainLoss::GaussianNllRegularized,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::param(
                "learning_rate",
                self.learning_rate,
                "must be positive",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", 0.0, "must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::param("hidden", 0.0, "must be >= 1"));
        }
        if self.warmup_epochs > self.max_epochs {
            return Err(Error::param(
                "warmup_epochs",
                self.warmup_epochs as f64,
                "must not exceed max_epochs",
            ));
        }
        for (name, v) in [
            ("lambda_mu", self.lambda_mu),
            ("lambda_sigma", self.lambda_sigma),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, v, "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn objective(&self) -> Loss {
        match self.loss {
            TrainLoss::CrossEntropy => Loss::CrossEntropy,
            TrainLoss::GaussianNll => Loss::GaussianNll,
            TrainLoss::GaussianNllRegularized => Loss::GaussianNllRegularized {
                lambda_mu: self.lambda_mu,
                lambda_sigma: self.lambda_sigma,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: MvnModel,
    /// Mean mini-batch loss per epoch, under the loss optimised that epoch.
    pub epoch_losses: Vec<f64>,
}

/// Per-feature mean and standard deviation (unit scale for constant columns).
pub fn feature_statistics(inputs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len() as f64;
    let d = inputs.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..d)
        .map(|j| inputs.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let scale = (0..d)
        .map(|j| {
            let var = inputs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Trains from a fresh initialisation. Deterministic given `cfg.seed`.
pub fn train_mvn(data: &Batch, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let mut model = MvnModel::new(
        data.inputs[0].len(),
        cfg.hidden,
        data.targets[0].len(),
        cfg.seed,
    )?;
    let (mean, scale) = feature_statistics(&data.inputs);
    model.set_normalization(mean, scale)?;

    let loss = cfg.objective();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = PortableRng::new(derive_seed(cfg.seed, rng::tag::SHUFFLE));
    let mut params = model.params();
    let mut epoch_losses = Vec::with_capacity(cfg.max_epochs);
    for epoch in 0..cfg.max_epochs {
        let warmup = epoch < cfg.warmup_epochs;
        shuffle.shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for rows in order.chunks(cfg.batch_size) {
            let batch = data.subset(rows);
            let (value, grad) = model.loss_and_gradient(&batch, loss, warmup)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            model.set_params(&params)?;
            sum += value;
            batches += 1;
        }
        epoch_losses.push(sum / batches as f64);
    }
    Ok(TrainedModel {
        model,
        epoch_losses,
    })
}
