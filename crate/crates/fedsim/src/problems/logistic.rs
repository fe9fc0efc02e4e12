//! Multinomial logistic regression over a worker-local shard.

use super::{Classifier, Objective, Sample};
use crate::error::{Error, Result};
use crate::numerics::{ParamVector, RngStream};

/// Cross-entropy loss of a linear softmax model with an intercept term and
/// optional ridge penalty. Parameters are the C x (p+1) weight matrix
/// flattened row-major, bias last in each row.
pub struct LogisticProblem {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    minibatch: usize,
    ridge: f64,
    smoothness: f64,
    sigma_sq: f64,
}

impl LogisticProblem {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        minibatch: usize,
        ridge: f64,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::config("logistic: empty shard"));
        }
        if features.len() != labels.len() {
            return Err(Error::config(format!(
                "logistic: {} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        let p = features[0].len();
        if features.iter().any(|f| f.len() != p) {
            return Err(Error::config("logistic: ragged feature rows"));
        }
        if labels.iter().any(|&y| y >= n_classes) {
            return Err(Error::config("logistic: label outside class range"));
        }
        if minibatch == 0 {
            return Err(Error::config("logistic: minibatch must be positive"));
        }
        // Hessian bound: the softmax Jacobian has operator norm at most 1/2,
        // so L <= max_s ||(phi,1)||^2 / 2 plus the ridge curvature.
        let max_feat_sq = features
            .iter()
            .map(|f| f.iter().map(|v| v * v).sum::<f64>() + 1.0)
            .fold(0.0, f64::max);
        Ok(LogisticProblem {
            features,
            labels,
            n_classes,
            minibatch,
            ridge,
            smoothness: max_feat_sq / 2.0 + ridge,
            sigma_sq: 0.0,
        })
    }

    /// Records the measured noise bound (set once before sharing).
    pub fn set_noise_bound(&mut self, sigma_sq: f64) {
        self.sigma_sq = sigma_sq;
    }

    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    fn n_features(&self) -> usize {
        self.features[0].len()
    }

    fn row<'a>(&self, x: &'a ParamVector, class: usize) -> &'a [f64] {
        let w = self.n_features() + 1;
        &x.as_slice()[class * w..(class + 1) * w]
    }

    /// Stable log-softmax class scores for one sample.
    fn logits(&self, x: &ParamVector, s: usize) -> Vec<f64> {
        let phi = &self.features[s];
        (0..self.n_classes)
            .map(|c| {
                let row = self.row(x, c);
                let mut z = row[phi.len()];
                for (w, v) in row.iter().zip(phi) {
                    z += w * v;
                }
                z
            })
            .collect()
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    fn grad_over_indices(&self, x: &ParamVector, idx: &[usize]) -> ParamVector {
        let w = self.n_features() + 1;
        let mut g = vec![0.0; self.dim()];
        let inv = 1.0 / idx.len() as f64;
        for &s in idx {
            let probs = Self::softmax(&self.logits(x, s));
            let phi = &self.features[s];
            for (c, &pc) in probs.iter().enumerate() {
                let coef = inv * (pc - if c == self.labels[s] { 1.0 } else { 0.0 });
                let row = &mut g[c * w..(c + 1) * w];
                for (gj, vj) in row.iter_mut().zip(phi) {
                    *gj += coef * vj;
                }
                row[phi.len()] += coef;
            }
        }
        if self.ridge > 0.0 {
            for (gj, xj) in g.iter_mut().zip(x.as_slice()) {
                *gj += self.ridge * xj;
            }
        }
        ParamVector::from_vec(g)
    }
}

impl Objective for LogisticProblem {
    fn dim(&self) -> usize {
        self.n_classes * (self.n_features() + 1)
    }

    fn value(&self, x: &ParamVector) -> f64 {
        let n = self.n_samples();
        let mut loss = 0.0;
        for s in 0..n {
            let logits = self.logits(x, s);
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            loss += lse - logits[self.labels[s]];
        }
        let mut out = loss / n as f64;
        if self.ridge > 0.0 {
            out += 0.5 * self.ridge * x.as_slice().iter().map(|v| v * v).sum::<f64>();
        }
        out
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
                "logistic objective received an additive-noise sample",
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

impl Classifier for LogisticProblem {
    fn predict(&self, x: &ParamVector, features: &[f64]) -> usize {
        let w = features.len() + 1;
        (0..self.n_classes)
            .map(|c| {
                let row = &x.as_slice()[c * w..(c + 1) * w];
                let mut z = row[features.len()];
                for (wj, vj) in row.iter().zip(features) {
                    z += wj * vj;
                }
                (c, z)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
            .0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Purpose, StreamId};
    use crate::problems::stochastic_gradient;

    fn toy() -> LogisticProblem {
        LogisticProblem::new(
            vec![
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.5],
                vec![0.3, -0.8],
            ],
            vec![0, 1, 2, 0],
            3,
            2,
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn full_batch_equals_full_gradient() {
        let p = LogisticProblem::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0, 1],
            2,
            2, // minibatch == dataset size
            0.0,
        )
        .unwrap();
        let x = ParamVector::from_vec(vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
        let mut rng = RngStream::new(3, StreamId::new(0, 0, Purpose::Local));
        let g = stochastic_gradient(&p, &x, &mut rng).unwrap();
        let full = p.full_gradient(&x).unwrap();
        for (a, b) in g.as_slice().iter().zip(full.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn loss_is_non_negative_and_dim_checked() {
        let p = toy();
        let x = ParamVector::zeros(p.dim());
        assert!(p.value(&x) >= 0.0);
        assert!(p.full_gradient(&ParamVector::zeros(1)).is_err());
    }

    #[test]
    fn minibatch_gradient_is_unbiased() {
        let p = toy();
        let x = ParamVector::from_vec((0..p.dim()).map(|i| 0.1 * i as f64 - 0.4).collect());
        let full = p.full_gradient(&x).unwrap();
        let mut rng = RngStream::new(9, StreamId::new(0, 0, Purpose::Measure));
        let trials = 40_000;
        let mut acc = ParamVector::zeros(p.dim());
        for _ in 0..trials {
            acc.axpy(1.0 / trials as f64, &stochastic_gradient(&p, &x, &mut rng).unwrap());
        }
        for (a, b) in acc.as_slice().iter().zip(full.as_slice()) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }

    #[test]
    fn predict_picks_argmax_class() {
        let p = toy();
        // Weights that strongly favor class 1 for feature e_1.
        let mut x = vec![0.0; p.dim()];
        x[3] = 5.0; // class 1 weight on feature 0
        let model = ParamVector::from_vec(x);
        assert_eq!(p.predict(&model, &[1.0, 0.0]), 1);
    }
}
