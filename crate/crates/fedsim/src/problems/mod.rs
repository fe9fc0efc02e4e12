//! Worker-local objectives with stochastic gradient oracles, plus the
//! analytic quantities (smoothness, per-worker infima, heterogeneity gap)
//! the bound calculators consume.

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::LogisticProblem;
pub use mlp::MlpProblem;
pub use quadratic::{quadratic_family, with_analytic_global_inf, QuadraticProblem};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm_sq, mean_reduce, ParamVector, Purpose, RngStream, StreamId};
use std::sync::Arc;

/// One realization of the stochastic oracle's randomness. Holding it fixed
/// lets callers re-evaluate the same sampled gradient at several points,
/// which the proximal solver and its fixed-point check both need.
#[derive(Debug, Clone)]
pub enum Sample {
    /// Additive gradient noise vector.
    Noise(ParamVector),
    /// Minibatch row indices, ascending.
    Batch(Vec<usize>),
}

/// A worker's objective f_i.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Deterministic objective value (full-dataset for empirical losses).
    fn value(&self, x: &ParamVector) -> f64;

    /// Exact gradient of the deterministic objective.
    fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector>;

    /// Draws the randomness for one stochastic gradient evaluation.
    fn draw_sample(&self, rng: &mut RngStream) -> Sample;

    /// Gradient of F(·; xi) for a fixed sample xi.
    fn sampled_gradient(&self, x: &ParamVector, sample: &Sample) -> Result<ParamVector>;

    /// Lipschitz constant of the gradient (exact where available, a
    /// documented bound or measurement otherwise).
    fn smoothness(&self) -> f64;

    /// Lower bound f_i^inf.
    fn lower_bound(&self) -> f64;

    /// Bound on E‖∇F(x;xi) − ∇f(x)‖² (vector-level second moment).
    fn noise_bound(&self) -> f64;
}

/// Class prediction for model parameters `x`, used for test-accuracy
/// reporting on dataset problems.
pub trait Classifier: Send + Sync {
    fn predict(&self, x: &ParamVector, features: &[f64]) -> usize;
}

/// Unbiased stochastic gradient: draws a fresh sample and evaluates it.
pub fn stochastic_gradient(
    p: &dyn Objective,
    x: &ParamVector,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let s = p.draw_sample(rng);
    p.sampled_gradient(x, &s)
}

fn check_dim(p: &dyn Objective, x: &ParamVector) -> Result<()> {
    if x.len() != p.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// The federated problem: n worker objectives plus the infimum of their
/// average. The infimum is analytic for quadratics; empirical losses carry a
/// documented surrogate (0 for cross-entropy unless a pilot estimate is set).
pub struct WorkerSet {
    objectives: Vec<Arc<dyn Objective>>,
    f_inf: f64,
}

impl WorkerSet {
    pub fn new(objectives: Vec<Arc<dyn Objective>>, f_inf: f64) -> Result<Self> {
        if objectives.is_empty() {
            return Err(Error::config("worker set needs at least one objective"));
        }
        let d = objectives[0].dim();
        if objectives.iter().any(|o| o.dim() != d) {
            return Err(Error::config("worker objectives disagree on dimension"));
        }
        Ok(WorkerSet { objectives, f_inf })
    }

    pub fn n(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    pub fn worker(&self, i: usize) -> &Arc<dyn Objective> {
        &self.objectives[i]
    }

    pub fn workers(&self) -> &[Arc<dyn Objective>] {
        &self.objectives
    }

    pub fn f_inf(&self) -> f64 {
        self.f_inf
    }

    pub fn set_f_inf(&mut self, f_inf: f64) {
        self.f_inf = f_inf;
    }

    /// f(x) = (1/n) Σ f_i(x).
    pub fn value(&self, x: &ParamVector) -> f64 {
        let n = self.n() as f64;
        self.objectives.iter().map(|o| o.value(x)).sum::<f64>() / n
    }

    /// ∇f(x), order-fixed mean of worker gradients.
    pub fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        let grads: Vec<ParamVector> = self
            .objectives
            .iter()
            .map(|o| o.full_gradient(x))
            .collect::<Result<_>>()?;
        mean_reduce(&grads)
    }

    /// Shared L: the largest worker smoothness constant.
    pub fn smoothness(&self) -> f64 {
        self.objectives
            .iter()
            .map(|o| o.smoothness())
            .fold(0.0, f64::max)
    }

    /// Shared sigma²: the largest worker noise bound.
    pub fn sigma_sq(&self) -> f64 {
        self.objectives
            .iter()
            .map(|o| o.noise_bound())
            .fold(0.0, f64::max)
    }
}

/// Heterogeneity-of-infima gap f^inf − (1/n) Σ f_i^inf, always ≥ 0.
/// A materially negative result means the supplied infima are inconsistent.
pub fn delta_inf(ws: &WorkerSet) -> Result<f64> {
    let n = ws.n() as f64;
    let mean_inf = ws
        .workers()
        .iter()
        .map(|o| o.lower_bound())
        .sum::<f64>()
        / n;
    let gap = ws.f_inf() - mean_inf;
    let scale = 1.0 + ws.f_inf().abs() + mean_inf.abs();
    if gap < -1e-9 * scale {
        return Err(Error::config(format!(
            "delta_inf is negative ({gap}); f^inf inputs are inconsistent"
        )));
    }
    Ok(gap.max(0.0))
}

/// Monte-Carlo estimate of sup_x E‖∇F(x;xi) − ∇f(x)‖² over a probe set:
/// the measured sigma² for objectives whose noise level is not analytic.
pub fn measure_sigma_sq(
    p: &dyn Objective,
    probes: &[ParamVector],
    draws_per_probe: usize,
    master_seed: u64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (pi, x) in probes.iter().enumerate() {
        let full = p.full_gradient(x)?;
        let mut rng = RngStream::new(master_seed, StreamId::new(pi as u32, 0, Purpose::Measure));
        let mut acc = 0.0;
        for _ in 0..draws_per_probe {
            let g = stochastic_gradient(p, x, &mut rng)?;
            acc += l2_norm_sq(&g.sub(&full));
        }
        worst = worst.max(acc / draws_per_probe as f64);
    }
    Ok(worst)
}

/// Largest observed gradient-Lipschitz ratio over random pairs, inflated by
/// a safety factor. Used as the claimed L where no analytic bound exists.
pub fn measure_smoothness(
    p: &dyn Objective,
    pairs: usize,
    scale: f64,
    master_seed: u64,
) -> Result<f64> {
    let d = p.dim();
    let mut rng = RngStream::new(master_seed, StreamId::new(0, 1, Purpose::Measure));
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = ParamVector::from_vec((0..d).map(|_| scale * rng.standard_normal()).collect());
        let y = ParamVector::from_vec((0..d).map(|_| scale * rng.standard_normal()).collect());
        let dx = l2_norm_sq(&x.sub(&y)).sqrt();
        if dx < 1e-12 {
            continue;
        }
        let dg = l2_norm_sq(&p.full_gradient(&x)?.sub(&p.full_gradient(&y)?)).sqrt();
        worst = worst.max(dg / dx);
    }
    Ok(worst * 2.0)
}
