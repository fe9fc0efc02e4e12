//! Local fixed-point operators applied by each worker per round: the T-step
//! stochastic-gradient operator and the inexact stochastic proximal operator.

use crate::error::{Error, Result};
use crate::numerics::{l2_norm_sq, ParamVector, RngStream};
use crate::problems::{Objective, Sample};

/// Inexact proximal solver settings. The stochastic sample is drawn once per
/// round and held fixed across inner iterations, so the solved subproblem is
/// deterministic given the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalSpec {
    /// Inner gradient step size (subject to the stability cap below).
    pub inner_lr: f64,
    /// Fixed inner iteration budget.
    pub inner_iters: usize,
    /// Optional early stop once the inner gradient norm drops below this.
    pub tol: Option<f64>,
}

impl Default for ProximalSpec {
    fn default() -> Self {
        ProximalSpec {
            inner_lr: 0.1,
            inner_iters: 50,
            tol: None,
        }
    }
}

/// Which fixed-point operator a worker applies.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalOperatorSpec {
    /// T sequential stochastic gradient steps.
    GradientSteps { steps: usize },
    /// One proximal update per round (the T = 1 round structure).
    Proximal(ProximalSpec),
}

impl LocalOperatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LocalOperatorSpec::GradientSteps { steps } => {
                if *steps == 0 {
                    return Err(Error::config("local.T must be at least 1"));
                }
            }
            LocalOperatorSpec::Proximal(spec) => {
                if spec.inner_lr <= 0.0 {
                    return Err(Error::config("local.inner_lr must be positive"));
                }
                if spec.inner_iters == 0 {
                    return Err(Error::config("local.inner_iters must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Local steps per round as seen by the bound constants (1 for proximal).
    pub fn steps(&self) -> usize {
        match self {
            LocalOperatorSpec::GradientSteps { steps } => *steps,
            LocalOperatorSpec::Proximal(_) => 1,
        }
    }
}

fn ensure_finite(x: &ParamVector, round_hint: usize, what: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Divergence {
            round: round_hint,
            detail: format!("{what} produced a non-finite iterate"),
        });
    }
    Ok(())
}

/// T sequential stochastic gradient steps from `x`, one fresh sample per
/// inner step.
pub fn apply_gradient_steps(
    p: &dyn Objective,
    x: &ParamVector,
    gamma: f64,
    steps: usize,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let (y, _) = apply_gradient_steps_traced(p, x, gamma, steps, rng)?;
    Ok(y)
}

/// Same as [`apply_gradient_steps`], also returning the sum of the sampled
/// gradients used, which the engine logs for the virtual-iterate audit.
pub fn apply_gradient_steps_traced(
    p: &dyn Objective,
    x: &ParamVector,
    gamma: f64,
    steps: usize,
    rng: &mut RngStream,
) -> Result<(ParamVector, ParamVector)> {
    if gamma <= 0.0 {
        return Err(Error::config(format!("step size must be positive, got {gamma}")));
    }
    if steps == 0 {
        return Err(Error::config("local.T must be at least 1"));
    }
    let mut y = x.clone();
    let mut grad_sum = ParamVector::zeros(x.len());
    for t in 0..steps {
        let g = crate::problems::stochastic_gradient(p, &y, rng)?;
        grad_sum.axpy(1.0, &g);
        y.axpy(-gamma, &g);
        ensure_finite(&y, t, "local gradient step")?;
    }
    Ok((y, grad_sum))
}

/// Step size actually used inside the prox subproblem: the configured rate,
/// capped just under the stability threshold 2/(L + 1/gamma) of the
/// regularized objective so tiny gamma cannot blow the inner loop up.
pub fn prox_inner_lr(spec: &ProximalSpec, smoothness: f64, gamma: f64) -> f64 {
    spec.inner_lr.min(1.9 / (smoothness + 1.0 / gamma))
}

/// Approximate prox_{gamma F}(x) for a sample drawn from `rng`.
pub fn apply_prox(
    p: &dyn Objective,
    x: &ParamVector,
    gamma: f64,
    spec: &ProximalSpec,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let sample = p.draw_sample(rng);
    apply_prox_with_sample(p, x, gamma, spec, &sample)
}

/// Inexact prox for a fixed sample: minimizes F(y; xi) + ‖y − x‖²/(2 gamma)
/// by gradient descent from y = x.
pub fn apply_prox_with_sample(
    p: &dyn Objective,
    x: &ParamVector,
    gamma: f64,
    spec: &ProximalSpec,
    sample: &Sample,
) -> Result<ParamVector> {
    if gamma <= 0.0 {
        return Err(Error::config(format!("prox parameter must be positive, got {gamma}")));
    }
    let lr = prox_inner_lr(spec, p.smoothness(), gamma);
    let mut y = x.clone();
    for it in 0..spec.inner_iters {
        let mut g = p.sampled_gradient(&y, sample)?;
        g.axpy(1.0 / gamma, &y.sub(x));
        if let Some(tol) = spec.tol {
            if l2_norm_sq(&g).sqrt() <= tol {
                break;
            }
        }
        y.axpy(-lr, &g);
        ensure_finite(&y, it, "prox inner step")?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Purpose, StreamId};
    use crate::problems::QuadraticProblem;
    use nalgebra::{DMatrix, DVector};

    fn half_x_sq(d: usize) -> QuadraticProblem {
        QuadraticProblem::new(DMatrix::identity(d, d), DVector::zeros(d), 0.0, 0.0).unwrap()
    }

    fn rng() -> RngStream {
        RngStream::new(1, StreamId::new(0, 0, Purpose::Local))
    }

    #[test]
    fn two_noiseless_steps_contract_geometrically() {
        // f = x²/2, x = 1, gamma = 0.1, T = 2 -> (1 - 0.1)² = 0.81.
        let p = half_x_sq(1);
        let y = apply_gradient_steps(&p, &ParamVector::from_vec(vec![1.0]), 0.1, 2, &mut rng())
            .unwrap();
        assert!((y.as_slice()[0] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn single_step_is_one_sgd_step_bitwise() {
        let p = half_x_sq(3);
        let x = ParamVector::from_vec(vec![0.4, -1.1, 2.2]);
        let y = apply_gradient_steps(&p, &x, 0.3, 1, &mut rng()).unwrap();
        let g = p.full_gradient(&x).unwrap();
        let mut expect = x.clone();
        expect.axpy(-0.3, &g);
        for (a, b) in y.as_slice().iter().zip(expect.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn capped_rounds_decrease_objective() {
        // 100 rounds at the full-precision cap on a noiseless quadratic:
        // f must fall monotonically along the round sequence.
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let p = QuadraticProblem::new(a, DVector::from_vec(vec![1.0, -0.5]), 0.0, 0.0).unwrap();
        let l = p.smoothness();
        let t = 4;
        let gamma = (1.0 / (6.0f64.sqrt() * l)) / t as f64;
        let mut x = ParamVector::from_vec(vec![3.0, -2.0]);
        let mut prev = p.value(&x);
        for _ in 0..100 {
            x = apply_gradient_steps(&p, &x, gamma, t, &mut rng()).unwrap();
            let cur = p.value(&x);
            assert!(cur <= prev + 1e-12);
            prev = cur;
        }
    }

    #[test]
    fn prox_matches_scalar_closed_form() {
        // f(y) = y²/2, gamma = 1, x = 2 -> prox = x/(1+gamma) = 1.
        let p = half_x_sq(1);
        let spec = ProximalSpec {
            inner_lr: 0.1,
            inner_iters: 2000,
            tol: None,
        };
        let y = apply_prox(&p, &ParamVector::from_vec(vec![2.0]), 1.0, &spec, &mut rng()).unwrap();
        assert!((y.as_slice()[0] - 1.0).abs() < 1e-9, "{}", y.as_slice()[0]);
        let oracle = p.exact_prox(&ParamVector::from_vec(vec![2.0]), 1.0).unwrap();
        assert!((oracle.as_slice()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prox_inner_solver_vs_closed_form_d20() {
        // d = 20, sigma = 0, 500 inner iterations, lr 0.1.
        let mut rng_mat = RngStream::new(8, StreamId::new(0, 0, Purpose::DataGen));
        let g = DMatrix::from_fn(20, 20, |_, _| rng_mat.standard_normal());
        let q = g.qr().q();
        let eigs = DVector::from_fn(20, |j, _| 0.2 + 1.8 * j as f64 / 19.0);
        let a = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let p = QuadraticProblem::new(a, DVector::from_fn(20, |j, _| (j as f64).sin()), 0.0, 0.0)
            .unwrap();
        let x = ParamVector::from_vec((0..20).map(|i| (i as f64 * 0.7).cos()).collect());
        let gamma = 1.0;
        let spec = ProximalSpec {
            inner_lr: 0.1,
            inner_iters: 500,
            tol: None,
        };
        let approx = apply_prox(&p, &x, gamma, &spec, &mut rng()).unwrap();
        let exact = p.exact_prox(&x, gamma).unwrap();
        let err = l2_norm_sq(&approx.sub(&exact)).sqrt();
        assert!(err <= 1e-6, "prox error {err}");
    }

    #[test]
    fn prox_fixed_point_residual() {
        // p_hat ≈ x − gamma ∇F(p_hat; xi) with the sample held fixed.
        let p = half_x_sq(5);
        let x = ParamVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -0.7]);
        let gamma = 0.5;
        let spec = ProximalSpec {
            inner_lr: 0.1,
            inner_iters: 800,
            tol: None,
        };
        let sample = p.draw_sample(&mut rng());
        let p_hat = apply_prox_with_sample(&p, &x, gamma, &spec, &sample).unwrap();
        let g = p.sampled_gradient(&p_hat, &sample).unwrap();
        let mut rhs = x.clone();
        rhs.axpy(-gamma, &g);
        let res = l2_norm_sq(&p_hat.sub(&rhs)).sqrt();
        assert!(res <= 1e-6, "fixed-point residual {res}");
    }

    #[test]
    fn prox_is_non_expansive_on_convex_quadratic() {
        let p = half_x_sq(4);
        let spec = ProximalSpec {
            inner_lr: 0.1,
            inner_iters: 400,
            tol: None,
        };
        let mut r = rng();
        for _ in 0..20 {
            let x = ParamVector::from_vec((0..4).map(|_| 3.0 * r.standard_normal()).collect());
            let y = ParamVector::from_vec((0..4).map(|_| 3.0 * r.standard_normal()).collect());
            let sample = p.draw_sample(&mut r);
            let px = apply_prox_with_sample(&p, &x, 0.7, &spec, &sample).unwrap();
            let py = apply_prox_with_sample(&p, &y, 0.7, &spec, &sample).unwrap();
            let lhs = l2_norm_sq(&px.sub(&py)).sqrt();
            let rhs = l2_norm_sq(&x.sub(&y)).sqrt();
            assert!(lhs <= rhs + 1e-9);
        }
    }

    #[test]
    fn prox_stays_put_as_gamma_vanishes() {
        // ‖prox(x) − x‖ <= 2 gamma ‖∇f(x)‖ at gamma = 1e-8.
        let p = half_x_sq(3);
        let x = ParamVector::from_vec(vec![2.0, -1.0, 4.0]);
        let gamma = 1e-8;
        let spec = ProximalSpec::default();
        let y = apply_prox(&p, &x, gamma, &spec, &mut rng()).unwrap();
        let move_len = l2_norm_sq(&y.sub(&x)).sqrt();
        let grad_len = l2_norm_sq(&p.full_gradient(&x).unwrap()).sqrt();
        assert!(move_len <= 2.0 * gamma * grad_len, "moved {move_len}");
    }

    #[test]
    fn rejects_nonpositive_gamma_and_zero_steps() {
        let p = half_x_sq(1);
        let x = ParamVector::from_vec(vec![1.0]);
        assert!(apply_gradient_steps(&p, &x, 0.0, 1, &mut rng()).is_err());
        assert!(apply_gradient_steps(&p, &x, 0.1, 0, &mut rng()).is_err());
        assert!(apply_prox(&p, &x, -1.0, &ProximalSpec::default(), &mut rng()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        // Step far above 2/L on an expanding iterate blows up to overflow.
        let p = half_x_sq(1);
        let x = ParamVector::from_vec(vec![1e300]);
        let r = apply_gradient_steps(&p, &x, 1e8, 400, &mut rng());
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }
}
