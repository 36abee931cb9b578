//! One-hidden-layer network with a mean head and a log-variance head.
//!
//! ```text
//! z     = (x - feature_mean) / feature_scale
//! h     = sigmoid(W1 z + b1)          (optionally masked by dropout)
//! mean  = sigmoid(Wm h + bm)
//! var   = VARIANCE_HEAD_FLOOR + exp(Wv h + bv)
//! ```
//!
//! Parameters are stored row-major and flatten in the order
//! `w1, b1, w_mean, b_mean, w_logvar, b_logvar`.

use std::ops::Range;

use super::loss::Loss;
use crate::error::{Error, Result};
use crate::rng::PortableRng;

/// Smallest variance the variance head can emit.
pub const VARIANCE_HEAD_FLOOR: f64 = 1e-6;

const INITIAL_LOGVAR_BIAS: f64 = -3.0;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inputs and targets for a set of hotspots.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        let (d, n) = (inputs[0].len(), targets[0].len());
        for (x, y) in inputs.iter().zip(&targets) {
            if x.len() != d {
                return Err(Error::LengthMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            if y.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: y.len(),
                });
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Batch {
        Batch {
            inputs: rows.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: rows.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvnModel {
    pub(crate) input_dim: usize,
    pub(crate) hidden: usize,
    pub(crate) n_species: usize,
    pub(crate) feature_mean: Vec<f64>,
    pub(crate) feature_scale: Vec<f64>,
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    pub(crate) w_mean: Vec<f64>,
    pub(crate) b_mean: Vec<f64>,
    pub(crate) w_logvar: Vec<f64>,
    pub(crate) b_logvar: Vec<f64>,
}

/// Mean and variance predictions for one hotspot.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

struct Forward {
    z: Vec<f64>,
    h: Vec<f64>,
    h_masked: Vec<f64>,
    mask: Option<Vec<f64>>,
    means: Vec<f64>,
    logvar: Vec<f64>,
    variances: Vec<f64>,
}

impl MvnModel {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases except
    /// the log-variance bias, identity feature scaling.
    pub fn new(input_dim: usize, hidden: usize, n_species: usize, seed: u64) -> Result<Self> {
        for (name, v) in [
            ("input_dim", input_dim),
            ("hidden", hidden),
            ("n_species", n_species),
        ] {
            if v == 0 {
                return Err(Error::param(name, 0.0, "must be >= 1"));
            }
        }
        let mut rng = PortableRng::derived(seed, crate::rng::tag::INIT);
        let mut init = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()
        };
        let w1 = init(hidden * input_dim, input_dim);
        let w_mean = init(n_species * hidden, hidden);
        let w_logvar = init(n_species * hidden, hidden);
        Ok(Self {
            input_dim,
            hidden,
            n_species,
            feature_mean: vec![0.0; input_dim],
            feature_scale: vec![1.0; input_dim],
            w1,
            b1: vec![0.0; hidden],
            w_mean,
            b_mean: vec![0.0; n_species],
            w_logvar,
            b_logvar: vec![INITIAL_LOGVAR_BIAS; n_species],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    /// Standardises inputs with the given per-feature statistics.
    pub fn set_normalization(&mut self, mean: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        if mean.len() != self.input_dim || scale.len() != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                found: mean.len().min(scale.len()),
            });
        }
        if let Some(&s) = scale.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::param("feature_scale", s, "must be positive"));
        }
        self.feature_mean = mean;
        self.feature_scale = scale;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.w1.len()
            + self.b1.len()
            + self.w_mean.len()
            + self.b_mean.len()
            + self.w_logvar.len()
            + self.b_logvar.len()
    }

    /// Flat positions of the log-variance head parameters.
    pub fn variance_head_range(&self) -> Range<usize> {
        let start = self.w1.len() + self.b1.len() + self.w_mean.len() + self.b_mean.len();
        start..start + self.w_logvar.len() + self.b_logvar.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for part in [
            &self.w1,
            &self.b1,
            &self.w_mean,
            &self.b_mean,
            &self.w_logvar,
            &self.b_logvar,
        ] {
            p.extend_from_slice(part);
        }
        p
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::LengthMismatch {
                expected: self.n_params(),
                found: flat.len(),
            });
        }
        let mut rest = flat;
        for part in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w_mean,
            &mut self.b_mean,
            &mut self.w_logvar,
            &mut self.b_logvar,
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64], mask: Option<Vec<f64>>) -> Forward {
        let z: Vec<f64> = x
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        let h: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
                sigmoid(self.b1[j] + row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
            })
            .collect();
        let h_masked = match &mask {
            Some(m) => h.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => h.clone(),
        };
        let head = |w: &[f64], b: &[f64]| -> Vec<f64> {
            (0..self.n_species)
                .map(|i| {
                    let row = &w[i * self.hidden..(i + 1) * self.hidden];
                    b[i] + row.iter().zip(&h_masked).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect()
        };
        let means = head(&self.w_mean, &self.b_mean)
            .into_iter()
            .map(sigmoid)
            .collect();
        let logvar = head(&self.w_logvar, &self.b_logvar);
        let variances = logvar
            .iter()
            .map(|a| VARIANCE_HEAD_FLOOR + a.exp())
            .collect();
        Forward {
            z,
            h,
            h_masked,
            mask,
            means,
            logvar,
            variances,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_input(x)?;
        let f = self.forward(x, None);
        Ok(Prediction {
            means: f.means,
            variances: f.variances,
        })
    }

    /// One stochastic forward pass with inverted dropout on the hidden layer.
    pub fn predict_with_dropout(
        &self,
        x: &[f64],
        rate: f64,
        rng: &mut PortableRng,
    ) -> Result<Prediction> {
        self.check_input(x)?;
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param("dropout rate", rate, "must lie in [0, 1)"));
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..self.hidden)
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
            .collect();
        let f = self.forward(x, Some(mask));
        Ok(Prediction {
            means: f.means,
            variances: f.variances,
        })
    }

    /// Batch-averaged loss and its gradient with respect to [`Self::params`].
    /// With `warmup` the variance head is bypassed (variance fixed at 1) and
    /// its gradient is exactly zero.
    pub fn loss_and_gradient(
        &self,
        batch: &Batch,
        loss: Loss,
        warmup: bool,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let (d, hn, n) = (self.input_dim, self.hidden, self.n_species);
        let mut g_w1 = vec![0.0; self.w1.len()];
        let mut g_b1 = vec![0.0; hn];
        let mut g_wm = vec![0.0; self.w_mean.len()];
        let mut g_bm = vec![0.0; n];
        let mut g_wv = vec![0.0; self.w_logvar.len()];
        let mut g_bv = vec![0.0; n];
        let scale = 1.0 / (batch.len() * n) as f64;
        let use_var = loss.uses_variance() && !warmup;
        let mut total = 0.0;

        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            let f = self.forward(x, None);
            let mut d_h = vec![0.0; hn];
            for i in 0..n {
                let var = if use_var { f.variances[i] } else { 1.0 };
                let (value, d_mean, d_var) = loss.element(y[i], f.means[i], var);
                total += value * scale;
                let d_am = scale * d_mean * f.means[i] * (1.0 - f.means[i]);
                let d_av = if use_var {
                    scale * d_var * f.logvar[i].exp()
                } else {
                    0.0
                };
                g_bm[i] += d_am;
                g_bv[i] += d_av;
                for j in 0..hn {
                    let r = i * hn + j;
                    g_wm[r] += d_am * f.h_masked[j];
                    g_wv[r] += d_av * f.h_masked[j];
                    d_h[j] += d_am * self.w_mean[r] + d_av * self.w_logvar[r];
                }
            }
            for j in 0..hn {
                let m = f.mask.as_ref().map_or(1.0, |m| m[j]);
                let d_a1 = d_h[j] * m * f.h[j] * (1.0 - f.h[j]);
                g_b1[j] += d_a1;
                for (g, z) in g_w1[j * d..(j + 1) * d].iter_mut().zip(&f.z) {
                    *g += d_a1 * z;
                }
            }
        }
        let mut grad = Vec::with_capacity(self.n_params());
        for part in [g_w1, g_b1, g_wm, g_bm, g_wv, g_bv] {
            grad.extend(part);
        }
        Ok((total, grad))
    }

    /// Batch-averaged loss without gradients.
    pub fn loss(&self, batch: &Batch, loss: Loss, warmup: bool) -> Result<f64> {
        self.check_batch(batch)?;
        let use_var = loss.uses_variance() && !warmup;
        let scale = 1.0 / (batch.len() * self.n_species) as f64;
        let mut total = 0.0;
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            let f = self.forward(x, None);
            for i in 0..self.n_species {
                let var = if use_var { f.variances[i] } else { 1.0 };
                total += loss.element(y[i], f.means[i], var).0 * scale;
            }
        }
        Ok(total)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        for (x, y) in batch.inputs.iter().zip(&batch.targets) {
            self.check_input(x)?;
            if y.len() != self.n_species {
                return Err(Error::LengthMismatch {
                    expected: self.n_species,
                    found: y.len(),
                });
            }
        }
        Ok(())
    }
}
