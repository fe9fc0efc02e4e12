//! Convergence machinery: the descent-inequality recursion oracle, the three
//! closed-form schedule bounds, their iteration-complexity inversions, the
//! per-algorithm constants calculator, and the measured-run verifier.
//!
//! The recursion under test is
//!   V_{k+1} <= (1 + b1 g_k^2) V_k - b2 g_k W_k + b3 g_k^2
//! with non-negative constants (b1, b2, b3) and positive steps g_k. The
//! oracle runs it with equality, which is the legal worst case, so sequences
//! it emits are an independent check of every bound.

use crate::error::{Error, Result};
use crate::numerics::{Purpose, RngStream, StreamId};
use crate::schedules::{step_size, theoretical_decay_period, ScheduleSpec};
use serde::Serialize;

/// The (b1, b2, b3) coefficients plus the step-size cap under which an
/// algorithm satisfies the descent inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstants {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub step_cap: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    FedAvg,
    FedProx,
    EfFedAvg,
    EfFedProx,
    Manual,
}

impl BoundConstants {
    pub fn manual(b1: f64, b2: f64, b3: f64) -> Result<Self> {
        let bc = BoundConstants {
            b1,
            b2,
            b3,
            step_cap: f64::INFINITY,
            provenance: Provenance::Manual,
        };
        bc.validate()?;
        Ok(bc)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.b1.is_nan() || self.b1 < 0.0 {
            errs.push(format!("b1 must be non-negative, got {}", self.b1));
        }
        if self.b2.is_nan() || self.b2 <= 0.0 {
            errs.push(format!("b2 must be positive, got {}", self.b2));
        }
        if self.b3.is_nan() || self.b3 < 0.0 {
            errs.push(format!("b3 must be non-negative, got {}", self.b3));
        }
        if self.step_cap.is_nan() || self.step_cap <= 0.0 {
            errs.push(format!("step cap must be positive, got {}", self.step_cap));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Schedule-side parameters a theorem needs beyond the constants.
#[derive(Debug, Clone, PartialEq)]
pub enum TheoremParams {
    Fixed { c: f64 },
    Diminishing { c: f64, nu: f64 },
    StepDecay { gamma0: f64, decay_base: f64, r: f64 },
}

/// Runs the descent recursion with equality:
/// V_{k+1} = (1 + b1 g_k^2) V_k - b2 g_k W_k + b3 g_k^2.
///
/// The caller must supply W_k keeping every V_{k+1} non-negative; a result
/// below zero by more than float dust is rejected as a contract violation
/// (dust within -1e-12 of the update scale is clamped to 0).
pub fn recursion_oracle(
    v0: f64,
    bc: &BoundConstants,
    gammas: &[f64],
    ws: &[f64],
) -> Result<Vec<f64>> {
    bc.validate()?;
    if v0 < 0.0 {
        return Err(Error::config(format!("V0 must be non-negative, got {v0}")));
    }
    if gammas.len() != ws.len() {
        return Err(Error::Dimension {
            expected: gammas.len(),
            got: ws.len(),
        });
    }
    let mut vs = Vec::with_capacity(gammas.len() + 1);
    vs.push(v0);
    let mut v = v0;
    for (k, (&g, &w)) in gammas.iter().zip(ws).enumerate() {
        if g <= 0.0 || w < 0.0 {
            return Err(Error::config(format!(
                "round {k}: need gamma > 0 and W >= 0, got gamma={g}, W={w}"
            )));
        }
        let grow = (1.0 + bc.b1 * g * g) * v + bc.b3 * g * g;
        let next = grow - bc.b2 * g * w;
        let tol = 1e-12 * grow.max(1.0);
        if next < -tol {
            return Err(Error::config(format!(
                "round {k}: W_k = {w} drives V below zero ({next})"
            )));
        }
        v = next.max(0.0);
        vs.push(v);
    }
    Ok(vs)
}

/// Fixed-step bound: with g_k = c/sqrt(K),
/// min_k W_k <= (exp(b1 c^2) V0 / (b2 c) + b3 c / b2) / sqrt(K).
pub fn theorem1_bound(v0: f64, bc: &BoundConstants, c: f64, horizon: usize) -> Result<f64> {
    bc.validate()?;
    if c <= 0.0 || horizon == 0 {
        return Err(Error::config(format!(
            "theorem1 needs c > 0 and K >= 1, got c={c}, K={horizon}"
        )));
    }
    let k = horizon as f64;
    Ok(((bc.b1 * c * c).exp() * v0 / (bc.b2 * c) + bc.b3 * c / bc.b2) / k.sqrt())
}

/// Diminishing-step bound: with g_k = c/(k+1)^nu, nu in (1/2, 1),
/// min_k W_k <= (V0/b2 + (b3/b2) s) exp(b1 s) / (c K^{1-nu}),
/// where s = 2 nu c^2 / (2 nu - 1).
pub fn theorem2_bound(
    v0: f64,
    bc: &BoundConstants,
    c: f64,
    nu: f64,
    horizon: usize,
) -> Result<f64> {
    bc.validate()?;
    if c <= 0.0 || horizon == 0 {
        return Err(Error::config(format!(
            "theorem2 needs c > 0 and K >= 1, got c={c}, K={horizon}"
        )));
    }
    if !(nu > 0.5 && nu < 1.0) {
        return Err(Error::config(format!("theorem2 needs nu in (1/2,1), got {nu}")));
    }
    let k = horizon as f64;
    let s = 2.0 * nu * c * c / (2.0 * nu - 1.0);
    Ok((v0 / bc.b2 + bc.b3 * s / bc.b2) * (bc.b1 * s).exp() / (c * k.powf(1.0 - nu)))
}

/// Step-decay bound: with g_k = gamma0 / base^{floor(k/T)} at the
/// theoretical period T = 2K/log_base(K) and V_k <= R,
/// min_k W_k <= R/(b2 gamma0 sqrt(K)) + C B log_base(K) / (2 gamma0 sqrt(K)),
/// with B = exp(2 b1 gamma0^2 / min(log_base 2, 1)) and C = (R + b3/b1)/b2.
///
/// b1 = 0 makes C undefined; callers should use the fixed or diminishing
/// bound in that regime.
pub fn theorem3_bound(
    v0: f64,
    bc: &BoundConstants,
    gamma0: f64,
    decay_base: f64,
    r: f64,
    horizon: usize,
) -> Result<f64> {
    bc.validate()?;
    if bc.b1 == 0.0 {
        return Err(Error::Degenerate(
            "step-decay bound divides by b1; use the fixed or diminishing bound when b1 = 0"
                .into(),
        ));
    }
    if gamma0 <= 0.0 || decay_base <= 1.0 || horizon < 2 {
        return Err(Error::config(format!(
            "theorem3 needs gamma0 > 0, base > 1, K >= 2; got {gamma0}, {decay_base}, {horizon}"
        )));
    }
    if r < 0.0 || r < v0 {
        return Err(Error::config(format!(
            "theorem3 needs a uniform bound R >= V0 >= 0, got R={r}, V0={v0}"
        )));
    }
    // Sanity anchor only; the closed form does not consume T directly.
    let _ = theoretical_decay_period(horizon, decay_base)?;
    let k = horizon as f64;
    let log_base_k = k.ln() / decay_base.ln();
    let log_base_2 = 2.0f64.ln() / decay_base.ln();
    let b = (2.0 * bc.b1 * gamma0 * gamma0 / log_base_2.min(1.0)).exp();
    let c_const = (r + bc.b3 / bc.b1) / bc.b2;
    Ok(r / (bc.b2 * gamma0 * k.sqrt()) + c_const * b * log_base_k / (2.0 * gamma0 * k.sqrt()))
}

/// Rounds an analytically integral bound up, absorbing float dust first.
fn round_up_count(x: f64) -> Result<u64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Degenerate(format!(
            "iteration count does not evaluate to a finite value: {x}"
        )));
    }
    let nearest = x.round();
    let v = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok(v as u64)
}

/// Worst-case rounds to reach min_k W_k <= eps under the given schedule kind.
pub fn iteration_complexity(
    bc: &BoundConstants,
    v0: f64,
    eps: f64,
    params: &TheoremParams,
) -> Result<u64> {
    bc.validate()?;
    if eps <= 0.0 {
        return Err(Error::config(format!("target accuracy must be positive, got {eps}")));
    }
    match *params {
        TheoremParams::Fixed { c } => {
            if c <= 0.0 {
                return Err(Error::config("iteration complexity needs c > 0"));
            }
            let base = (bc.b1 * c * c).exp() * v0 / (bc.b2 * c) + bc.b3 * c / bc.b2;
            round_up_count((base / eps).powi(2))
        }
        TheoremParams::Diminishing { c, nu } => {
            if c <= 0.0 || !(nu > 0.5 && nu < 1.0) {
                return Err(Error::config(
                    "iteration complexity needs c > 0 and nu in (1/2,1)",
                ));
            }
            let s = 2.0 * nu * c * c / (2.0 * nu - 1.0);
            let base = (v0 / bc.b2 + bc.b3 * s / bc.b2) * (bc.b1 * s).exp() / c;
            round_up_count((base / eps).powf(1.0 / (1.0 - nu)))
        }
        TheoremParams::StepDecay { .. } => Err(Error::Degenerate(
            "no closed-form complexity inversion is stated for step-decay schedules".into(),
        )),
    }
}

/// Which federated algorithm the constants describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlgorithmKind {
    FedAvg,
    FedProx,
    EfFedAvg,
    EfFedProx,
}

/// Problem-side inputs to the constants calculator.
#[derive(Debug, Clone, Copy)]
pub struct ProblemConstants {
    /// Shared gradient-Lipschitz constant L.
    pub smoothness: f64,
    /// Local steps per round T (forced to 1 by the proximal variants).
    pub local_steps: usize,
    /// Noise bound sigma^2.
    pub sigma_sq: f64,
    /// Heterogeneity gap Delta^inf.
    pub delta_inf: f64,
    /// Compressor contraction alpha in (0, 1]; ignored by the
    /// full-precision variants.
    pub contraction: f64,
}

/// The per-algorithm (b1, b2, b3, cap) tuples.
///
/// For the averaging family the capped quantity is the round step before
/// division by T (the engine applies gamma = step/T); for the proximal
/// family it is the prox parameter itself.
pub fn proposition_constants(
    which: AlgorithmKind,
    p: &ProblemConstants,
) -> Result<BoundConstants> {
    let l = p.smoothness;
    let t = p.local_steps as f64;
    let mut errs = Vec::new();
    if l.is_nan() || l <= 0.0 {
        errs.push(format!("smoothness L must be positive, got {l}"));
    }
    if p.local_steps == 0 {
        errs.push("local steps T must be at least 1".into());
    }
    if p.sigma_sq < 0.0 {
        errs.push(format!("sigma_sq must be non-negative, got {}", p.sigma_sq));
    }
    if p.delta_inf < 0.0 {
        errs.push(format!("delta_inf must be non-negative, got {}", p.delta_inf));
    }
    let needs_alpha = matches!(which, AlgorithmKind::EfFedAvg | AlgorithmKind::EfFedProx);
    if needs_alpha && !(p.contraction > 0.0 && p.contraction <= 1.0) {
        errs.push(format!(
            "contraction alpha must lie in (0, 1], got {}",
            p.contraction
        ));
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let sq6 = 6.0f64.sqrt();
    let (b1, b2, b3, cap, provenance) = match which {
        AlgorithmKind::FedAvg => {
            let b1 = sq6 * l * l * t;
            let b3 = sq6 * l * l * t * p.delta_inf + l * (1.0 + 3.0 / sq6 * t) * p.sigma_sq;
            (b1, 0.5, b3, 1.0 / (sq6 * l), Provenance::FedAvg)
        }
        AlgorithmKind::FedProx => {
            let b1 = sq6 * l * l;
            let b3 = sq6 * l * l * p.delta_inf + l * (1.0 + 3.0 / sq6) * p.sigma_sq;
            (b1, 0.5, b3, 1.0 / (sq6 * l), Provenance::FedProx)
        }
        AlgorithmKind::EfFedAvg => {
            let alpha = p.contraction;
            let w = (1.0 - alpha) * (1.0 + 2.0 / alpha);
            let sqrt_term = if w > 0.0 {
                (3.0 * alpha / (64.0 * w)).sqrt()
            } else {
                f64::INFINITY
            };
            let alpha_hat = (1.0 / l) * (1.0 / 6.0f64).min(sqrt_term);
            let a = 4.0 * (1.0 + 1.5 * l) * l * l * alpha_hat / alpha;
            let c2t = 16.0 * w * a / 3.0 + 1.5 * l;
            let c3t = 14.0 * w * a / 3.0 + 13.0 * l / 8.0;
            let b1 = 2.0 * l * c2t;
            let b3 = 2.0 * l * c2t * p.delta_inf + c3t * p.sigma_sq;
            (b1, 0.25, b3, alpha_hat, Provenance::EfFedAvg)
        }
        AlgorithmKind::EfFedProx => {
            let alpha = p.contraction;
            let w = (1.0 - alpha) * (1.0 + 2.0 / alpha);
            let c1 = w * (4.0 + 4.0 * l * l / 3.0);
            let c2 = w * (4.0 + 4.0 / 3.0);
            let c3 = w * (4.0 + 2.0 / 3.0);
            let sqrt_term = if c1 > 0.0 {
                0.5 * (alpha / c1).sqrt()
            } else {
                f64::INFINITY
            };
            let gamma_bar = (1.0 / (6.0 * l)).min(sqrt_term);
            let a = 3.0 * l * l * gamma_bar / alpha;
            let core = 1.5 * l + a * c2;
            let b1 = 2.0 * l * core;
            let b3 = 2.0 * l * core * p.delta_inf + (2.25 * l + a * c3) * p.sigma_sq;
            (b1, 0.25, b3, gamma_bar, Provenance::EfFedProx)
        }
    };
    let bc = BoundConstants {
        b1,
        b2,
        b3,
        step_cap: cap,
        provenance,
    };
    bc.validate()?;
    Ok(bc)
}

/// Multi-seed measurements of one experiment, as the verifier consumes them.
#[derive(Debug, Clone)]
pub struct MeasuredRun {
    /// Per-round mean of the squared gradient norm across seeds (length K+1).
    pub w_mean: Vec<f64>,
    /// Standard error of each mean (zeros for a single seed).
    pub w_se: Vec<f64>,
    /// V at round zero (deterministic given the initial point).
    pub v0: f64,
    /// Largest observed V across seeds and rounds, for the step-decay R.
    pub v_max: f64,
    pub seeds: usize,
    /// Whether every scheduled step respected the proposition cap.
    pub in_regime: bool,
}

/// Verdict on one measured run versus the applicable schedule bound.
#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub theorem: String,
    pub bound: f64,
    #[serde(rename = "measured_min_W")]
    pub measured_min_w: f64,
    pub margin: f64,
    pub in_regime: bool,
    pub seeds: usize,
    /// True only when the measurement exceeds the bound by more than two
    /// standard errors while inside the step-size regime.
    pub violation: bool,
}

/// Compares measured min_k W_k against the matching theorem bound. Never
/// flags statistical noise: a violation requires exceedance beyond two
/// standard errors, and runs outside the cap regime make no bound claim.
pub fn verify_run(
    m: &MeasuredRun,
    bc: &BoundConstants,
    schedule: &ScheduleSpec,
    r_override: Option<f64>,
) -> Result<VerdictReport> {
    if m.w_mean.is_empty() {
        return Err(Error::config("verify_run: empty measurement"));
    }
    let (argmin, &min_w) = m
        .w_mean
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty");
    let se = m.w_se.get(argmin).copied().unwrap_or(0.0);
    let mut in_regime = m.in_regime;
    let (theorem, bound) = match *schedule {
        ScheduleSpec::Fixed { c, horizon } => (
            "theorem1_fixed".to_string(),
            theorem1_bound(m.v0, bc, c, horizon)?,
        ),
        ScheduleSpec::Diminishing { c, nu } => {
            let horizon = m.w_mean.len().saturating_sub(1).max(1);
            (
                "theorem2_diminishing".to_string(),
                theorem2_bound(m.v0, bc, c, nu, horizon)?,
            )
        }
        ScheduleSpec::StepDecay {
            gamma0,
            decay_base,
            period,
        } => {
            let horizon = m.w_mean.len().saturating_sub(1).max(1);
            // The bound assumes the theoretical decay period; a run at any
            // other period (e.g. the hand-picked experimental one) is
            // outside the theorem's regime.
            if period != theoretical_decay_period(horizon, decay_base)? {
                in_regime = false;
            }
            // R: supplied, or largest observed V inflated by 10%.
            let r = r_override.unwrap_or(m.v_max * 1.1).max(m.v0);
            (
                "theorem3_stepdecay".to_string(),
                theorem3_bound(m.v0, bc, gamma0, decay_base, r, horizon)?,
            )
        }
    };
    let violation = in_regime && min_w > bound + 2.0 * se;
    Ok(VerdictReport {
        theorem,
        bound,
        measured_min_w: min_w,
        margin: bound - min_w,
        in_regime,
        seeds: m.seeds,
        violation,
    })
}

/// Lemma sweep predicates, re-run against the exact constants the bounds use.
pub fn lemma_fixed_growth_holds(a: f64, c: f64, horizon: usize) -> bool {
    let gamma = c / (horizon as f64).sqrt();
    (horizon as f64) * (a * gamma * gamma).ln_1p() <= a * c * c
}

pub fn lemma_diminishing_tail_holds(c: f64, nu: f64, horizon: usize) -> bool {
    let sum: f64 = (0..horizon)
        .map(|k| {
            let g = c / ((k + 1) as f64).powf(nu);
            g * g
        })
        .sum();
    sum <= 2.0 * nu * c * c / (2.0 * nu - 1.0)
}

/// Schedule families the soundness fuzz can draw instances from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuzzKind {
    Fixed,
    Diminishing,
    StepDecay,
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzOutcome {
    pub trials: usize,
    pub violations: usize,
    /// Smallest bound-minus-min_W gap seen (how close the worst case came).
    pub worst_margin: f64,
}

/// Valid step-decay shapes: K = base^{2M} with T = K/M integral, so the
/// theoretical period assumptions hold exactly.
const STEP_DECAY_SHAPES: &[(f64, usize)] = &[
    (2.0, 1),
    (2.0, 2),
    (2.0, 4),
    (3.0, 1),
    (3.0, 3),
    (4.0, 1),
    (4.0, 2),
    (5.0, 1),
    (6.0, 1),
    (8.0, 1),
];

/// Random descent-inequality instances run with equality through the
/// recursion oracle, each checked against the matching theorem bound.
/// The bounds are proven inequalities, so the expected violation count is
/// exactly zero.
pub fn soundness_fuzz(kind: FuzzKind, trials: usize, seed: u64) -> Result<FuzzOutcome> {
    let mut rng = RngStream::new(seed, StreamId::new(0, kind as u32, Purpose::Fuzz));
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..trials {
        let b1 = if kind == FuzzKind::StepDecay {
            0.01 + 1.5 * rng.next_f64()
        } else if rng.next_f64() < 0.1 {
            0.0
        } else {
            2.0 * rng.next_f64()
        };
        let b2 = match (rng.next_f64() * 3.0) as usize {
            0 => 0.25,
            1 => 0.5,
            _ => 0.05 + 0.95 * rng.next_f64(),
        };
        let b3 = if rng.next_f64() < 0.15 {
            0.0
        } else {
            2.0 * rng.next_f64()
        };
        let bc = BoundConstants::manual(b1, b2, b3)?;
        let v0 = if rng.next_f64() < 0.1 {
            0.0
        } else {
            5.0 * rng.next_f64()
        };

        let (gammas, bound, r_cap) = match kind {
            FuzzKind::Fixed => {
                let c = 0.05 + 1.5 * rng.next_f64();
                let horizon = 1 + rng.gen_range_usize(1000);
                let g = c / (horizon as f64).sqrt();
                let bound = theorem1_bound(v0, &bc, c, horizon)?;
                (vec![g; horizon], bound, None)
            }
            FuzzKind::Diminishing => {
                let c = 0.05 + 0.95 * rng.next_f64();
                let nu = 0.51 + 0.44 * rng.next_f64();
                let horizon = 1 + rng.gen_range_usize(1500);
                let sched = ScheduleSpec::Diminishing { c, nu };
                let gammas: Vec<f64> = (0..horizon)
                    .map(|k| step_size(&sched, k))
                    .collect::<Result<_>>()?;
                let bound = theorem2_bound(v0, &bc, c, nu, horizon)?;
                (gammas, bound, None)
            }
            FuzzKind::StepDecay => {
                let (base, m_periods) =
                    STEP_DECAY_SHAPES[rng.gen_range_usize(STEP_DECAY_SHAPES.len())];
                let horizon = (base.powi(2 * m_periods as i32)) as usize;
                let period = horizon / m_periods;
                let gamma0 = 0.05 + 1.2 * rng.next_f64();
                let r = v0 + 0.1 + 3.0 * rng.next_f64();
                let sched = ScheduleSpec::StepDecay {
                    gamma0,
                    decay_base: base,
                    period,
                };
                let gammas: Vec<f64> = (0..horizon)
                    .map(|k| step_size(&sched, k))
                    .collect::<Result<_>>()?;
                let bound = theorem3_bound(v0, &bc, gamma0, base, r, horizon)?;
                (gammas, bound, Some(r))
            }
        };

        // Sample W_k inside the band that keeps 0 <= V_{k+1} (<= R when capped).
        let mut v = v0;
        let mut ws = Vec::with_capacity(gammas.len());
        for &g in &gammas {
            let grow = (1.0 + bc.b1 * g * g) * v + bc.b3 * g * g;
            let hi = grow / (bc.b2 * g);
            let lo = r_cap
                .map(|r| ((grow - r) / (bc.b2 * g)).max(0.0))
                .unwrap_or(0.0);
            let w = lo + (hi - lo) * rng.next_f64();
            ws.push(w);
            v = (grow - bc.b2 * g * w).max(0.0);
        }
        let vs = recursion_oracle(v0, &bc, &gammas, &ws)?;
        debug_assert_eq!(vs.len(), gammas.len() + 1);
        let min_w = ws.iter().cloned().fold(f64::INFINITY, f64::min);
        let margin = bound - min_w;
        if margin < worst_margin {
            worst_margin = margin;
        }
        if min_w > bound {
            violations += 1;
        }
    }
    Ok(FuzzOutcome {
        trials,
        violations,
        worst_margin,
    })
}
