//! One-hidden-layer tanh network with softmax cross-entropy output and
//! hand-written backpropagation. Desk-scale stand-in for a convolutional
//! model: genuinely non-convex, cheap enough for finite-difference audits.

use super::{Classifier, Objective, Sample};
use crate::error::{Error, Result};
use crate::numerics::{ParamVector, RngStream};

pub struct MlpProblem {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    hidden: usize,
    minibatch: usize,
    smoothness: f64,
    sigma_sq: f64,
}

impl MlpProblem {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        hidden: usize,
        minibatch: usize,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::config("mlp: empty shard"));
        }
        if features.len() != labels.len() {
            return Err(Error::config(format!(
                "mlp: {} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        let p = features[0].len();
        if features.iter().any(|f| f.len() != p) {
            return Err(Error::config("mlp: ragged feature rows"));
        }
        if labels.iter().any(|&y| y >= n_classes) {
            return Err(Error::config("mlp: label outside class range"));
        }
        if hidden == 0 || minibatch == 0 {
            return Err(Error::config("mlp: hidden width and minibatch must be positive"));
        }
        Ok(MlpProblem {
            features,
            labels,
            n_classes,
            hidden,
            minibatch,
            smoothness: 0.0,
            sigma_sq: 0.0,
        })
    }

    /// Records the measured Lipschitz estimate for the gradient.
    pub fn set_smoothness(&mut self, l: f64) {
        self.smoothness = l;
    }

    /// Records the measured noise bound.
    pub fn set_noise_bound(&mut self, sigma_sq: f64) {
        self.sigma_sq = sigma_sq;
    }

    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    fn n_features(&self) -> usize {
        self.features[0].len()
    }

    fn w1_len(&self) -> usize {
        self.hidden * (self.n_features() + 1)
    }

    /// Forward pass for one sample: hidden activations and class probabilities.
    fn forward(&self, x: &ParamVector, phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.n_features();
        let w1 = &x.as_slice()[..self.w1_len()];
        let w2 = &x.as_slice()[self.w1_len()..];
        let mut act = vec![0.0; self.hidden];
        for (h, a) in act.iter_mut().enumerate() {
            let row = &w1[h * (p + 1)..(h + 1) * (p + 1)];
            let mut z = row[p];
            for (wj, vj) in row.iter().zip(phi) {
                z += wj * vj;
            }
            *a = z.tanh();
        }
        let mut logits = vec![0.0; self.n_classes];
        for (c, l) in logits.iter_mut().enumerate() {
            let row = &w2[c * (self.hidden + 1)..(c + 1) * (self.hidden + 1)];
            let mut z = row[self.hidden];
            for (wj, aj) in row.iter().zip(&act) {
                z += wj * aj;
            }
            *l = z;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        (act, exps.into_iter().map(|e| e / sum).collect())
    }

    fn loss_over_indices(&self, x: &ParamVector, idx: &[usize]) -> f64 {
        let mut loss = 0.0;
        for &s in idx {
            let (_, probs) = self.forward(x, &self.features[s]);
            loss -= probs[self.labels[s]].max(1e-300).ln();
        }
        loss / idx.len() as f64
    }

    fn grad_over_indices(&self, x: &ParamVector, idx: &[usize]) -> ParamVector {
        let p = self.n_features();
        let h = self.hidden;
        let w2 = &x.as_slice()[self.w1_len()..];
        let mut g = vec![0.0; self.dim()];
        let inv = 1.0 / idx.len() as f64;
        for &s in idx {
            let phi = &self.features[s];
            let (act, probs) = self.forward(x, phi);
            // Output layer: delta2_c = p_c - 1{c = y}.
            let mut delta1 = vec![0.0; h];
            for (c, &pc) in probs.iter().enumerate() {
                let d2 = inv * (pc - if c == self.labels[s] { 1.0 } else { 0.0 });
                let row = &mut g[self.w1_len() + c * (h + 1)..self.w1_len() + (c + 1) * (h + 1)];
                for (gj, aj) in row.iter_mut().zip(&act) {
                    *gj += d2 * aj;
                }
                row[h] += d2;
                let w2_row = &w2[c * (h + 1)..(c + 1) * (h + 1)];
                for (dj, wj) in delta1.iter_mut().zip(w2_row) {
                    *dj += d2 * wj;
                }
            }
            // Hidden layer: tanh'(z) = 1 - a^2.
            for (hj, d1) in delta1.iter_mut().enumerate() {
                *d1 *= 1.0 - act[hj] * act[hj];
                let row = &mut g[hj * (p + 1)..(hj + 1) * (p + 1)];
                for (gj, vj) in row.iter_mut().zip(phi) {
                    *gj += *d1 * vj;
                }
                row[p] += *d1;
            }
        }
        ParamVector::from_vec(g)
    }
}

impl Objective for MlpProblem {
    fn dim(&self) -> usize {
        self.w1_len() + self.n_classes * (self.hidden + 1)
    }

    fn value(&self, x: &ParamVector) -> f64 {
        let all: Vec<usize> = (0..self.n_samples()).collect();
        self.loss_over_indices(x, &all)
    }

    fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        super::check_dim(self, x)?;
        let all: Vec<usize> = (0..self.n_samples()).collect();
        Ok(self.grad_over_indices(x, &all))
    }

    fn draw_sample(&self, rng: &mut RngStream) -> Sample {
        let n = self.n_samples();
        if self.minibatch >= n {
            return Sample::Batch((0..n).collect());
        }
        let mut idx = rng.sample_without_replacement(n, self.minibatch);
        idx.sort_unstable();
        Sample::Batch(idx)
    }

    fn sampled_gradient(&self, x: &ParamVector, sample: &Sample) -> Result<ParamVector> {
        super::check_dim(self, x)?;
        match sample {
            Sample::Batch(idx) => Ok(self.grad_over_indices(x, idx)),
            Sample::Noise(_) => Err(Error::config(
                "mlp objective received an additive-noise sample",
            )),
        }
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn noise_bound(&self) -> f64 {
        self.sigma_sq
    }
}

impl Classifier for MlpProblem {
    fn predict(&self, x: &ParamVector, features: &[f64]) -> usize {
        let (_, probs) = self.forward(x, features);
        probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &p)| {
                if p > best.1 {
                    (c, p)
                } else {
                    best
                }
            })
            .0
    }
}
