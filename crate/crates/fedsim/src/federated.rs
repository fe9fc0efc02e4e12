//! The round engine: server broadcast, T local fixed-point updates per
//! worker, aggregation. One generic loop covers the full-precision and
//! error-feedback variants.
//!
//! Both variants aggregate worker deltas: the server applies the mean of the
//! transmitted messages to the current model. For full precision the message
//! is x_i − x^k (the update form of the averaging step), for error feedback
//! it is Q(x_i − x^k + e_i^k). With the identity compressor the two paths
//! perform identical arithmetic, so their trajectories agree bit for bit.

use crate::compressors::{compress, CompressorSpec};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::localops::{
    apply_gradient_steps_traced, apply_prox, LocalOperatorSpec,
};
use crate::numerics::{l2_norm_sq, mean_reduce, ParamVector, Purpose, RngStream, StreamId};
use crate::problems::{Classifier, WorkerSet};
use crate::schedules::{step_size, ScheduleSpec};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// How worker results reach the server.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregation {
    FullPrecision,
    ErrorFeedback(CompressorSpec),
}

/// Initial model selection.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Zeros,
    /// Per-coordinate N(0, scale²) draw from the run seed.
    Gaussian { scale: f64 },
    Given(ParamVector),
}

/// One run's engine settings (problem-independent).
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub horizon: usize,
    pub seed: u64,
    pub schedule: ScheduleSpec,
    pub local_op: LocalOperatorSpec,
    pub aggregation: Aggregation,
    /// Divide the round step by T for gradient-step workers (the coupling
    /// the averaging-family constants assume). Presets replicating the
    /// reference experiments disable it.
    pub rescale_by_t: bool,
    /// Proposition step cap; scheduled steps are compared against it each
    /// round and optionally clamped.
    pub step_cap: Option<f64>,
    pub clamp_to_cap: bool,
    pub init: InitSpec,
    /// Record per-round gradient sums and virtual iterates.
    pub trace: bool,
}

/// Global model state.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub x: ParamVector,
    pub round: usize,
}

/// Per-worker state: the error-feedback memory (identically zero under full
/// precision) plus the worker index that keys its random streams.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub index: usize,
    pub error: ParamVector,
}

/// z^k = x^k + (1/n) Σ e_i^k: the iterate that follows the uncompressed
/// update exactly.
pub fn virtual_iterate(server: &ServerState, workers: &[WorkerState]) -> Result<ParamVector> {
    let errors: Vec<ParamVector> = workers.iter().map(|w| w.error.clone()).collect();
    Ok(server.x.add(&mean_reduce(&errors)?))
}

/// Per-round metric sequences for one seed. State rows span rounds 0..=K,
/// step rows 0..K (shorter when the run diverged).
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    /// Round step gamma^k actually used (after any clamping).
    pub gammas: Vec<f64>,
    /// f(x^k) − f^inf.
    pub loss_gap: Vec<f64>,
    /// ‖∇f(x^k)‖².
    pub grad_norm_sq: Vec<f64>,
    /// (1/n) Σ ‖e_i^k‖².
    pub err_norm_sq: Vec<f64>,
    /// Test accuracy when an evaluator is configured.
    pub test_acc: Vec<Option<f64>>,
    /// Whether every scheduled step respected the cap.
    pub in_regime: bool,
    pub diverged_at: Option<usize>,
    pub wall: Duration,
}

impl RunRecord {
    pub fn rounds_completed(&self) -> usize {
        self.gammas.len()
    }
}

/// Diagnostic trail for the algebraic audits.
#[derive(Debug, Clone, Default)]
pub struct EngineTrace {
    /// Σ_i Σ_t ∇F_i(x_i^{k,t}; ξ) per round (gradient-step workers only).
    pub grad_sums: Vec<ParamVector>,
    /// Local step used inside workers each round.
    pub local_gammas: Vec<f64>,
    /// z^k for k = 0..=K.
    pub virtual_iterates: Vec<ParamVector>,
}

/// Test-set evaluator attached to dataset problems.
pub struct TestEvaluator {
    pub classifier: Arc<dyn Classifier>,
    pub test_set: LabeledDataset,
}

impl TestEvaluator {
    pub fn accuracy(&self, x: &ParamVector) -> f64 {
        if self.test_set.is_empty() {
            return 0.0;
        }
        let hits = self
            .test_set
            .samples
            .iter()
            .filter(|(f, y)| self.classifier.predict(x, f) == *y)
            .count();
        hits as f64 / self.test_set.len() as f64
    }
}

fn initial_model(ws: &WorkerSet, cfg: &EngineConfig) -> Result<ParamVector> {
    let d = ws.dim();
    match &cfg.init {
        InitSpec::Zeros => Ok(ParamVector::zeros(d)),
        InitSpec::Gaussian { scale } => {
            let mut rng = RngStream::new(cfg.seed, StreamId::new(0, 0, Purpose::Init));
            Ok(ParamVector::from_vec(
                (0..d).map(|_| scale * rng.standard_normal()).collect(),
            ))
        }
        InitSpec::Given(x) => {
            if x.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: x.len(),
                });
            }
            Ok(x.clone())
        }
    }
}

/// Algorithm run: broadcast, local fixed-point updates, aggregate.
/// Divergence aborts with the partial record (`diverged_at` set) rather than
/// an error so multi-seed sweeps can continue.
pub fn run(
    ws: &WorkerSet,
    cfg: &EngineConfig,
    test: Option<&TestEvaluator>,
) -> Result<(RunRecord, Option<EngineTrace>)> {
    cfg.schedule.validate()?;
    cfg.local_op.validate()?;
    if let Aggregation::ErrorFeedback(CompressorSpec::TopK { k }) = cfg.aggregation {
        if k > ws.dim() {
            return Err(Error::config(format!(
                "compressor.k = {k} exceeds model dimension {}",
                ws.dim()
            )));
        }
    }
    let start = Instant::now();
    let n = ws.n();
    let d = ws.dim();
    let _t_steps = cfg.local_op.steps();

    let mut server = ServerState {
        x: initial_model(ws, cfg)?,
        round: 0,
    };
    let mut workers: Vec<WorkerState> = (0..n)
        .map(|i| WorkerState {
            index: i,
            error: ParamVector::zeros(d),
        })
        .collect();

    let mut record = RunRecord {
        seed: cfg.seed,
        gammas: Vec::with_capacity(cfg.horizon),
        loss_gap: Vec::with_capacity(cfg.horizon + 1),
        grad_norm_sq: Vec::with_capacity(cfg.horizon + 1),
        err_norm_sq: Vec::with_capacity(cfg.horizon + 1),
        test_acc: Vec::with_capacity(cfg.horizon + 1),
        in_regime: true,
        diverged_at: None,
        wall: Duration::ZERO,
    };
    let mut trace = if cfg.trace {
        Some(EngineTrace::default())
    } else {
        None
    };

    let record_state = |server: &ServerState,
                            workers: &[WorkerState],
                            record: &mut RunRecord,
                            trace: &mut Option<EngineTrace>|
     -> Result<()> {
        record
            .loss_gap
            .push(ws.value(&server.x) - ws.f_inf());
        record
            .grad_norm_sq
            .push(l2_norm_sq(&ws.full_gradient(&server.x)?));
        record.err_norm_sq.push(
            workers.iter().map(|w| l2_norm_sq(&w.error)).sum::<f64>() / n as f64,
        );
        record
            .test_acc
            .push(test.map(|te| te.accuracy(&server.x)));
        if let Some(tr) = trace {
            tr.virtual_iterates.push(virtual_iterate(server, workers)?);
        }
        Ok(())
    };

    // The averaging-family constants assume the round step is divided by T;
    // running the schedule as the raw local rate leaves that regime.
    if let LocalOperatorSpec::GradientSteps { steps } = cfg.local_op {
        if steps > 1 && !cfg.rescale_by_t && cfg.step_cap.is_some() {
            record.in_regime = false;
        }
    }

    record_state(&server, &workers, &mut record, &mut trace)?;

    for k in 0..cfg.horizon {
        let scheduled = step_size(&cfg.schedule, k)?;
        let mut gamma_round = scheduled;
        if let Some(cap) = cfg.step_cap {
            if scheduled > cap {
                record.in_regime = false;
                if cfg.clamp_to_cap {
                    log::warn!(
                        "round {k}: scheduled step {scheduled} above cap {cap}, clamped"
                    );
                    gamma_round = cap;
                }
            }
        }
        let gamma_local = match cfg.local_op {
            LocalOperatorSpec::GradientSteps { steps } if cfg.rescale_by_t => {
                gamma_round / steps as f64
            }
            _ => gamma_round,
        };

        // Local updates, one independent stream per (worker, round).
        let results: Vec<Result<(ParamVector, Option<ParamVector>)>> = {
            use rayon::prelude::*;
            workers
                .par_iter()
                .map(|w| {
                    let mut rng = RngStream::new(
                        cfg.seed,
                        StreamId::new(w.index as u32, k as u32, Purpose::Local),
                    );
                    let obj = ws.worker(w.index).as_ref();
                    match &cfg.local_op {
                        LocalOperatorSpec::GradientSteps { steps } => {
                            let (y, gsum) = apply_gradient_steps_traced(
                                obj,
                                &server.x,
                                gamma_local,
                                *steps,
                                &mut rng,
                            )?;
                            Ok((y, Some(gsum)))
                        }
                        LocalOperatorSpec::Proximal(spec) => {
                            let y = apply_prox(obj, &server.x, gamma_local, spec, &mut rng)?;
                            Ok((y, None))
                        }
                    }
                })
                .collect()
        };

        let mut locals = Vec::with_capacity(n);
        let mut diverged = false;
        for r in results {
            match r {
                Ok(pair) => locals.push(pair),
                Err(Error::Divergence { detail, .. }) => {
                    log::warn!("round {k}: {detail}; aborting run");
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if diverged {
            record.diverged_at = Some(k);
            break;
        }

        if let Some(tr) = trace.as_mut() {
            let mut total = ParamVector::zeros(d);
            for (_, gsum) in &locals {
                if let Some(g) = gsum {
                    total.axpy(1.0, g);
                }
            }
            tr.grad_sums.push(total);
            tr.local_gammas.push(gamma_local);
        }

        // Messages and error updates.
        let mut messages = Vec::with_capacity(n);
        match &cfg.aggregation {
            Aggregation::FullPrecision => {
                for (y, _) in &locals {
                    messages.push(y.sub(&server.x));
                }
            }
            Aggregation::ErrorFeedback(q) => {
                for (w, (y, _)) in workers.iter_mut().zip(&locals) {
                    let v = y.sub(&server.x).add(&w.error);
                    let compressed = compress(*q, &v)?;
                    w.error = v.sub(&compressed);
                    messages.push(compressed);
                }
            }
        }

        server.x = server.x.add(&mean_reduce(&messages)?);
        server.round = k + 1;
        record.gammas.push(gamma_round);

        if !server.x.is_finite() {
            log::warn!("round {k}: aggregated model is non-finite; aborting run");
            record.diverged_at = Some(k);
            break;
        }
        record_state(&server, &workers, &mut record, &mut trace)?;
    }

    record.wall = start.elapsed();
    debug_assert_eq!(record.loss_gap.len(), record.gammas.len() + 1);
    Ok((record, trace))
}

/// Algorithm run without compression.
pub fn run_full_precision(
    ws: &WorkerSet,
    cfg: &EngineConfig,
    test: Option<&TestEvaluator>,
) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.aggregation = Aggregation::FullPrecision;
    run(ws, &cfg, test).map(|(r, _)| r)
}

/// Algorithm run with error-compensated compressed messages.
pub fn run_error_feedback(
    ws: &WorkerSet,
    cfg: &EngineConfig,
    test: Option<&TestEvaluator>,
    q: CompressorSpec,
) -> Result<RunRecord> {
    let mut cfg = cfg.clone();
    cfg.aggregation = Aggregation::ErrorFeedback(q);
    run(ws, &cfg, test).map(|(r, _)| r)
}
