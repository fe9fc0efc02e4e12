//! Quadratic worker objectives. The closed forms for the smoothness
//! constant, per-worker infima, global minimizer, and heterogeneity gap make
//! these the verification vehicle for every bound check.

use super::{Objective, Sample, WorkerSet};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_vector, ParamVector, Purpose, RngStream, StreamId};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// f(x) = 1/2 x'Ax - b'x + c with A symmetric PSD, plus additive Gaussian
/// gradient noise of vector-level second moment sigma².
pub struct QuadraticProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    smoothness: f64,
    lower: f64,
    sigma_sq: f64,
}

impl QuadraticProblem {
    /// Builds from raw (A, b, c). The smoothness constant is the largest
    /// eigenvalue of A and the infimum comes from the pseudo-inverse.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64, sigma_sq: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::config("quadratic: A must be square and match b"));
        }
        if sigma_sq < 0.0 {
            return Err(Error::config("quadratic: sigma_sq must be non-negative"));
        }
        let sym = a.clone().symmetric_eigen();
        let lam_max = sym.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if sym.eigenvalues.iter().any(|&l| l < -1e-10 * lam_max.max(1.0)) {
            return Err(Error::config("quadratic: A must be positive semi-definite"));
        }
        let pinv = a
            .clone()
            .pseudo_inverse(1e-12 * lam_max.max(1.0))
            .map_err(|e| Error::config(format!("quadratic: pseudo-inverse failed: {e}")))?;
        let lower = c - 0.5 * (b.transpose() * &pinv * &b)[(0, 0)];
        Ok(QuadraticProblem {
            a,
            b,
            c,
            smoothness: lam_max,
            lower,
            sigma_sq,
        })
    }

    /// f(x) = 1/2 (x-m)'A(x-m): infimum exactly 0 at the given minimizer.
    pub fn from_centered(a: DMatrix<f64>, m: DVector<f64>, sigma_sq: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != m.len() {
            return Err(Error::config("quadratic: A must be square and match m"));
        }
        let sym = a.clone().symmetric_eigen();
        let lam_max = sym.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let b = &a * &m;
        let c = 0.5 * (m.transpose() * &b)[(0, 0)];
        Ok(QuadraticProblem {
            a,
            b,
            c,
            smoothness: lam_max,
            lower: 0.0,
            sigma_sq,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn offset(&self) -> f64 {
        self.c
    }

    /// Unique minimizer when A is invertible.
    pub fn minimizer(&self) -> Result<ParamVector> {
        let x = self
            .a
            .clone()
            .lu()
            .solve(&self.b)
            .ok_or_else(|| Error::config("quadratic: A is singular, no unique minimizer"))?;
        Ok(ParamVector::from_vec(x.data.into()))
    }

    /// Exact proximal map (A + I/gamma)^{-1} (b + x/gamma) for the noiseless
    /// objective; the independent oracle for the inexact prox solver.
    pub fn exact_prox(&self, x: &ParamVector, gamma: f64) -> Result<ParamVector> {
        let d = self.a.nrows();
        let mut m = self.a.clone();
        for i in 0..d {
            m[(i, i)] += 1.0 / gamma;
        }
        let rhs = &self.b + DVector::from_column_slice(x.as_slice()) / gamma;
        let y = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::config("quadratic: prox system is singular"))?;
        Ok(ParamVector::from_vec(y.data.into()))
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &ParamVector) -> f64 {
        let xv = DVector::from_column_slice(x.as_slice());
        0.5 * (xv.transpose() * &self.a * &xv)[(0, 0)] - self.b.dot(&xv) + self.c
    }

    fn full_gradient(&self, x: &ParamVector) -> Result<ParamVector> {
        super::check_dim(self, x)?;
        let xv = DVector::from_column_slice(x.as_slice());
        let g = &self.a * xv - &self.b;
        Ok(ParamVector::from_vec(g.data.into()))
    }

    fn draw_sample(&self, rng: &mut RngStream) -> Sample {
        Sample::Noise(gaussian_vector(rng, self.dim(), self.sigma_sq.sqrt()))
    }

    fn sampled_gradient(&self, x: &ParamVector, sample: &Sample) -> Result<ParamVector> {
        let full = self.full_gradient(x)?;
        if self.sigma_sq == 0.0 {
            return Ok(full);
        }
        match sample {
            Sample::Noise(eps) => Ok(full.add(eps)),
            Sample::Batch(_) => Err(Error::config(
                "quadratic objective received a minibatch sample",
            )),
        }
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn lower_bound(&self) -> f64 {
        self.lower
    }

    fn noise_bound(&self) -> f64 {
        self.sigma_sq
    }
}

/// Assembles a worker set whose global infimum is computed in closed form
/// from the averaged quadratic. All objectives must be quadratic.
pub fn with_analytic_global_inf(objs: Vec<Arc<dyn Objective>>) -> Result<WorkerSet> {
    // Downcasting is avoided by rebuilding the averaged quadratic from the
    // gradient oracle: A_bar column j = mean gradient of e_j plus b_bar, with
    // b_bar = -mean gradient at 0.
    let n = objs.len();
    if n == 0 {
        return Err(Error::config("empty worker list"));
    }
    let d = objs[0].dim();
    let zero = ParamVector::zeros(d);
    let mut b_bar: DVector<f64> = DVector::zeros(d);
    for o in &objs {
        let g0 = o.full_gradient(&zero)?;
        for j in 0..d {
            b_bar[j] -= g0.as_slice()[j] / n as f64;
        }
    }
    let mut a_bar: DMatrix<f64> = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = ParamVector::zeros(d);
        e.0[j] = 1.0;
        for o in &objs {
            let g = o.full_gradient(&e)?;
            let g0 = o.full_gradient(&zero)?;
            for i in 0..d {
                a_bar[(i, j)] += (g.as_slice()[i] - g0.as_slice()[i]) / n as f64;
            }
        }
    }
    let c_bar = objs.iter().map(|o| o.value(&zero)).sum::<f64>() / n as f64;
    let x_star = a_bar
        .clone()
        .lu()
        .solve(&b_bar)
        .ok_or_else(|| Error::config("averaged quadratic is singular"))?;
    let f_inf = c_bar - 0.5 * b_bar.dot(&x_star);
    WorkerSet::new(objs, f_inf)
}

/// n heterogeneous quadratics: eigenvalues spread over [mu, l_max] under
/// per-worker random rotations, minimizers placed at radius `rho` around the
/// origin. rho = 0 recovers the homogeneous regime (all infima aligned).
pub fn quadratic_family(
    n: usize,
    d: usize,
    mu: f64,
    l_max: f64,
    rho: f64,
    sigma_sq: f64,
    seed: u64,
) -> Result<WorkerSet> {
    let mut errs = Vec::new();
    if n == 0 {
        errs.push("quadratic family: need at least one worker".to_string());
    }
    if d == 0 {
        errs.push("quadratic family: dimension must be positive".to_string());
    }
    if mu.is_nan() || mu <= 0.0 {
        errs.push(format!("quadratic family: mu must be positive, got {mu}"));
    }
    if l_max < mu {
        errs.push(format!(
            "quadratic family: l_max {l_max} below mu {mu}"
        ));
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut objs: Vec<Arc<dyn Objective>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = RngStream::new(seed, StreamId::new(i as u32, 0, Purpose::DataGen));
        // Random orthogonal Q from the QR decomposition of a Gaussian matrix.
        let g = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
        let q = g.qr().q();
        let eigs = DVector::from_fn(d, |j, _| {
            if d == 1 {
                l_max
            } else {
                mu + (l_max - mu) * j as f64 / (d - 1) as f64
            }
        });
        let a = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
        // Symmetrize to wash out the last-ulp asymmetry of the triple product.
        let a = (&a + a.transpose()) * 0.5;
        let m = if rho == 0.0 {
            DVector::zeros(d)
        } else {
            let dir = gaussian_vector(&mut rng, d, 1.0);
            let norm = dir.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
            DVector::from_column_slice(dir.as_slice()) * (rho / norm.max(1e-30))
        };
        objs.push(Arc::new(QuadraticProblem::from_centered(a, m, sigma_sq)?));
    }
    with_analytic_global_inf(objs)
}
