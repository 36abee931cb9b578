//! Training losses on rate vectors, with their elementwise derivatives.

use crate::error::{Error, Result};

/// Predictions are clamped into `[BCE_EPSILON, 1 - BCE_EPSILON]` for
/// cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// Binary cross-entropy on the mean head.
    CrossEntropy,
    /// Gaussian negative log-likelihood.
    GaussianNll,
    /// Gaussian NLL plus `lambda_mu * mean(mean^2) + lambda_sigma * mean(log(var)^2)`.
    GaussianNllRegularized { lambda_mu: f64, lambda_sigma: f64 },
}

impl Loss {
    pub fn uses_variance(&self) -> bool {
        !matches!(self, Loss::CrossEntropy)
    }

    /// Loss for one species plus `(d/d mean, d/d variance)`.
    pub(crate) fn element(&self, y: f64, mean: f64, var: f64) -> (f64, f64, f64) {
        match *self {
            Loss::CrossEntropy => {
                let clamped = mean.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
                let value = -y * clamped.ln() - (1.0 - y) * (1.0 - clamped).ln();
                let d_mean = if clamped == mean {
                    -y / clamped + (1.0 - y) / (1.0 - clamped)
                } else {
                    0.0
                };
                (value, d_mean, 0.0)
            }
            Loss::GaussianNll => gaussian_element(y, mean, var),
            Loss::GaussianNllRegularized {
                lambda_mu,
                lambda_sigma,
            } => {
                let (value, d_mean, d_var) = gaussian_element(y, mean, var);
                let log_var = var.ln();
                (
                    value + lambda_mu * mean * mean + lambda_sigma * log_var * log_var,
                    d_mean + 2.0 * lambda_mu * mean,
                    d_var + 2.0 * lambda_sigma * log_var / var,
                )
            }
        }
    }
}

fn gaussian_element(y: f64, mean: f64, var: f64) -> (f64, f64, f64) {
    let r = y - mean;
    (
        0.5 * var.ln() + r * r / (2.0 * var),
        -r / var,
        0.5 / var - r * r / (2.0 * var * var),
    )
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: b.len(),
            found: a.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("species vector"));
    }
    Ok(())
}

fn check_variances(var: &[f64]) -> Result<()> {
    match var.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        Some(&v) => Err(Error::param("predicted variance", v, "must be positive")),
        None => Ok(()),
    }
}

/// Binary cross-entropy averaged over species.
pub fn loss_bce(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| Loss::CrossEntropy.element(y, p, 1.0).0)
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gaussian negative log-likelihood averaged over species.
pub fn loss_gaussian_nll(pred_mean: &[f64], pred_var: &[f64], truth: &[f64]) -> Result<f64> {
    loss_gaussian_nll_regularized(pred_mean, pred_var, truth, 0.0, 0.0)
}

pub fn loss_gaussian_nll_regularized(
    pred_mean: &[f64],
    pred_var: &[f64],
    truth: &[f64],
    lambda_mu: f64,
    lambda_sigma: f64,
) -> Result<f64> {
    check_lengths(pred_mean, truth)?;
    check_lengths(pred_var, truth)?;
    check_variances(pred_var)?;
    let loss = Loss::GaussianNllRegularized {
        lambda_mu,
        lambda_sigma,
    };
    let sum: f64 = pred_mean
        .iter()
        .zip(pred_var)
        .zip(truth)
        .map(|((&m, &v), &y)| loss.element(y, m, v).0)
        .sum();
    Ok(sum / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bce_examples() {
        assert_relative_eq!(
            loss_bce(&[0.5], &[0.5]).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert!(loss_bce(&[1.0 - BCE_EPSILON], &[1.0]).unwrap() < 1e-6);
        assert!(loss_bce(&[1.0], &[1.0]).unwrap().is_finite());
        let at = loss_bce(&[0.5], &[0.5]).unwrap();
        for p in [0.3, 0.45, 0.49, 0.51, 0.7] {
            assert!(loss_bce(&[p], &[0.5]).unwrap() > at);
        }
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(loss_gaussian_nll(&[0.3], &[1.0], &[0.3]).unwrap(), 0.0);
        assert_eq!(loss_gaussian_nll(&[0.0], &[1.0], &[1.0]).unwrap(), 0.5);
        assert_relative_eq!(
            loss_gaussian_nll(&[0.0], &[0.25], &[0.5]).unwrap(),
            0.5 * 0.25f64.ln() + 0.5,
            epsilon = 1e-15
        );
        assert!(loss_gaussian_nll(&[0.0], &[0.0], &[0.5]).is_err());
        assert!(loss_gaussian_nll(&[0.0], &[1.0, 1.0], &[0.5]).is_err());
    }

    #[test]
    fn regularized_examples() {
        let base = loss_gaussian_nll(&[0.2, 0.7], &[0.3, 0.1], &[0.1, 0.9]).unwrap();
        let reg = loss_gaussian_nll_regularized(&[0.2, 0.7], &[0.3, 0.1], &[0.1, 0.9], 0.0, 0.0);
        assert_eq!(reg.unwrap(), base);
        let v = loss_gaussian_nll_regularized(&[0.0], &[1.0], &[0.0], 0.1, 0.1).unwrap();
        assert_eq!(v, 0.0);
        let v = loss_gaussian_nll_regularized(&[1.0], &[1.0], &[1.0], 0.1, 0.0).unwrap();
        assert_relative_eq!(v, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_minimised_at_squared_residual() {
        let residual: f64 = 0.3;
        let target = residual * residual;
        let at = loss_gaussian_nll(&[0.0], &[target], &[residual]).unwrap();
        for k in 1..200 {
            let v = k as f64 * 0.001;
            assert!(loss_gaussian_nll(&[0.0], &[v], &[residual]).unwrap() >= at - 1e-15);
        }
    }
}
