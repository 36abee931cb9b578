//! Baseline and mean-variance models trained on hotspot features.

mod gradcheck;
mod io;
mod loss;
mod network;
mod train;

pub use gradcheck::{gradient_check, ModelObjective, Objective, RELATIVE_ERROR_FLOOR};
pub use io::{read_models, write_models};
pub use loss::{loss_bce, loss_gaussian_nll, loss_gaussian_nll_regularized, Loss, BCE_EPSILON};
pub use network::{Batch, MvnModel, Prediction, VARIANCE_HEAD_FLOOR};
pub use train::{feature_statistics, train_mvn, TrainConfig, TrainLoss, TrainedModel};

use crate::error::{Error, Result};
use crate::observations::{empirical_rates, Dataset, Split};

/// Per-species average of the training hotspots' empirical rates.
pub fn mean_rate_baseline(dataset: &Dataset) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; dataset.n_species()];
    let mut count = 0usize;
    for h in dataset.in_split(Split::Train) {
        for (s, r) in sum.iter_mut().zip(empirical_rates(h)?) {
            *s += r;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("training split"));
    }
    Ok(sum.into_iter().map(|s| s / count as f64).collect())
}

/// Features and empirical-rate targets of every hotspot in `split`.
pub fn training_batch(dataset: &Dataset, split: Split) -> Result<Batch> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for h in dataset.in_split(split) {
        let x = h
            .features
            .clone()
            .ok_or_else(|| Error::Empty("hotspot features").at_hotspot(&h.hotspot_id))?;
        inputs.push(x);
        targets.push(empirical_rates(h)?);
    }
    Batch::new(inputs, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PortableRng;

    fn random_batch(seed: u64, rows: usize, d: usize, n: usize) -> Batch {
        let mut rng = PortableRng::new(seed);
        let inputs = (0..rows)
            .map(|_| (0..d).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let targets = (0..rows)
            .map(|_| (0..n).map(|_| rng.uniform_range(0.05, 0.95)).collect())
            .collect();
        Batch::new(inputs, targets).unwrap()
    }

    fn losses() -> [Loss; 3] {
        [
            Loss::CrossEntropy,
            Loss::GaussianNll,
            Loss::GaussianNllRegularized {
                lambda_mu: 0.1,
                lambda_sigma: 0.1,
            },
        ]
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        for seed in 0..4 {
            let batch = random_batch(seed, 5, 3, 4);
            let model = MvnModel::new(3, 5, 4, seed + 100).unwrap();
            for loss in losses() {
                for warmup in [false, true] {
                    let obj = ModelObjective {
                        model: &model,
                        batch: &batch,
                        loss,
                        warmup,
                    };
                    let err = gradient_check(&obj, 1e-5, usize::MAX, seed).unwrap();
                    assert!(err < 1e-4, "{loss:?} warmup={warmup}: {err}");
                }
            }
        }
    }

    #[test]
    fn warmup_zeroes_variance_head() {
        let batch = random_batch(9, 6, 2, 3);
        let model = MvnModel::new(2, 4, 3, 1).unwrap();
        let range = model.variance_head_range();
        for loss in losses() {
            let (_, g) = model.loss_and_gradient(&batch, loss, true).unwrap();
            assert!(g[range.clone()].iter().all(|&v| v == 0.0));
        }
        let (_, g) = model
            .loss_and_gradient(&batch, Loss::GaussianNll, false)
            .unwrap();
        assert!(g[range].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradient_check_rejects_bad_epsilon() {
        let batch = random_batch(1, 2, 2, 2);
        let model = MvnModel::new(2, 2, 2, 1).unwrap();
        let obj = ModelObjective {
            model: &model,
            batch: &batch,
            loss: Loss::CrossEntropy,
            warmup: false,
        };
        assert!(gradient_check(&obj, 1e-2, 4, 0).is_err());
        assert!(gradient_check(&obj, 1e-7, 4, 0).is_err());
    }

    #[test]
    fn params_roundtrip_and_variance_floor() {
        let mut model = MvnModel::new(3, 4, 2, 5).unwrap();
        let p = model.params();
        assert_eq!(p.len(), model.n_params());
        model.set_params(&p).unwrap();
        assert_eq!(model.params(), p);
        assert!(model.set_params(&p[1..]).is_err());
        let pred = model.predict(&[0.1, -0.3, 2.0]).unwrap();
        assert!(pred.variances.iter().all(|&v| v > VARIANCE_HEAD_FLOOR));
        assert!(pred.means.iter().all(|&m| m > 0.0 && m < 1.0));
        assert!(model.predict(&[0.0]).is_err());
    }

    #[test]
    fn dropout_passes_vary_but_are_seeded() {
        let model = MvnModel::new(3, 16, 4, 2).unwrap();
        let x = [0.5, -1.0, 0.25];
        let mut a = PortableRng::new(3);
        let mut b = PortableRng::new(3);
        let p1 = model.predict_with_dropout(&x, 0.2, &mut a).unwrap();
        let p2 = model.predict_with_dropout(&x, 0.2, &mut a).unwrap();
        assert_ne!(p1, p2);
        assert_eq!(p1, model.predict_with_dropout(&x, 0.2, &mut b).unwrap());
        let none = model.predict_with_dropout(&x, 0.0, &mut b).unwrap();
        assert_eq!(none, model.predict(&x).unwrap());
        assert!(model.predict_with_dropout(&x, 1.0, &mut b).is_err());
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let mut rng = PortableRng::new(4);
        let inputs: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..2).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let targets = inputs
            .iter()
            .map(|x| vec![1.0 / (1.0 + (-2.0 * x[0]).exp()), 0.2])
            .collect();
        let batch = Batch::new(inputs, targets).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            batch_size: 16,
            max_epochs: 40,
            warmup_epochs: 0,
            hidden: 8,
            loss: TrainLoss::CrossEntropy,
            seed: 7,
            ..TrainConfig::default()
        };
        let a = train_mvn(&batch, &cfg).unwrap();
        let b = train_mvn(&batch, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.epoch_losses.last().unwrap() < &a.epoch_losses[0]);

        let bad = TrainConfig {
            warmup_epochs: 50,
            max_epochs: 10,
            ..cfg
        };
        assert!(train_mvn(&batch, &bad).is_err());
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models.csv");
        let mut a = MvnModel::new(3, 4, 2, 1).unwrap();
        a.set_normalization(vec![0.5, 1.0, -2.0], vec![1.0, 2.0, 0.5])
            .unwrap();
        let b = MvnModel::new(3, 2, 2, 2).unwrap();
        write_models(&path, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_models(&path).unwrap(), vec![a, b]);
        std::fs::write(&path, "name,index,value\nm0.w1,0,oops\n").unwrap();
        assert!(read_models(&path).unwrap_err().is_data_error());
    }
}
