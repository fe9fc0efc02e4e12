//! Experiment orchestration: config resolution, multi-seed execution,
//! metrics persistence, theory verdicts, and the experiment presets.

mod config;
mod output;

pub use config::{
    CompressorCfg, DatasetCfg, ExperimentConfig, InitCfg, KvConfig, PartitionCfg, ProblemCfg,
};
pub use output::{
    aggregate, parse_run_csv, render_aggregate_csv, render_run_csv, Aggregate, RunRow,
    AGG_HEADER, RUN_HEADER,
};

use crate::compressors::{contraction_factor, CompressorSpec};
use crate::datasets::{load_idx, partition, synth_blobs, LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::federated::{
    run as engine_run, Aggregation, EngineConfig, InitSpec, RunRecord, TestEvaluator,
};
use crate::numerics::ParamVector;
use crate::problems::{
    delta_inf, measure_sigma_sq, measure_smoothness, Classifier, LogisticProblem, MlpProblem,
    Objective, WorkerSet,
};
use crate::problems::quadratic_family;
use crate::theory::{
    proposition_constants, verify_run, BoundConstants, MeasuredRun,
    ProblemConstants, VerdictReport,
};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Everything needed to run one experiment: the problem, the optional test
/// evaluator, the resolved compressor, and the bound constants.
pub struct BuiltExperiment {
    pub workers: WorkerSet,
    pub test: Option<TestEvaluator>,
    pub compressor: Option<CompressorSpec>,
    pub contraction: f64,
    pub constants: BoundConstants,
    pub delta_inf: f64,
}

fn split_blobs(
    classes: usize,
    per_class: usize,
    test_per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    let total = per_class + test_per_class;
    let full = synth_blobs(seed, classes, total, dim, spread)?;
    if test_per_class == 0 {
        return Ok((full, None));
    }
    let mut train = Vec::with_capacity(classes * per_class);
    let mut test = Vec::with_capacity(classes * test_per_class);
    for c in 0..classes {
        let base = c * total;
        train.extend_from_slice(&full.samples[base..base + per_class]);
        test.extend_from_slice(&full.samples[base + per_class..base + total]);
    }
    Ok((
        LabeledDataset {
            samples: train,
            n_classes: classes,
        },
        Some(LabeledDataset {
            samples: test,
            n_classes: classes,
        }),
    ))
}

fn load_dataset(cfg: &DatasetCfg) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    match cfg {
        DatasetCfg::Blobs {
            classes,
            per_class,
            test_per_class,
            dim,
            spread,
            seed,
        } => split_blobs(*classes, *per_class, *test_per_class, *dim, *spread, *seed),
        DatasetCfg::Idx {
            images,
            labels,
            test_images,
            test_labels,
            limit,
        } => {
            let mut train = load_idx(images, labels)?;
            if let Some(limit) = limit {
                if *limit > 0 && *limit < train.len() {
                    train.samples.truncate(*limit);
                }
            }
            let test = match (test_images, test_labels) {
                (Some(ti), Some(tl)) => Some(load_idx(ti, tl)?),
                (None, None) => None,
                _ => {
                    return Err(Error::config(
                        "dataset.test_images and dataset.test_labels must be set together",
                    ))
                }
            };
            Ok((train, test))
        }
    }
}

fn shard(ds: &LabeledDataset, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let feats = indices.iter().map(|&i| ds.samples[i].0.clone()).collect();
    let labels = indices.iter().map(|&i| ds.samples[i].1).collect();
    (feats, labels)
}

fn sigma_probe_points(dim: usize, probes: usize, seed: u64) -> Vec<ParamVector> {
    let mut out = vec![ParamVector::zeros(dim)];
    let mut rng = crate::numerics::RngStream::new(
        seed,
        crate::numerics::StreamId::new(0, 2, crate::numerics::Purpose::Measure),
    );
    for _ in 1..probes.max(1) {
        out.push(ParamVector::from_vec(
            (0..dim).map(|_| 0.5 * rng.standard_normal()).collect(),
        ));
    }
    out
}

/// Resolves the configured experiment into a runnable problem.
pub fn build(cfg: &ExperimentConfig) -> Result<BuiltExperiment> {
    let (mut workers, test): (WorkerSet, Option<TestEvaluator>) = match (&cfg.problem, &cfg.dataset)
    {
        (
            ProblemCfg::Quadratic {
                workers,
                dim,
                mu,
                l_max,
                rho,
                sigma_sq,
                seed,
            },
            None,
        ) => (
            quadratic_family(*workers, *dim, *mu, *l_max, *rho, *sigma_sq, *seed)?,
            None,
        ),
        (problem, Some(ds_cfg)) => {
            let part_cfg = cfg
                .partition
                .as_ref()
                .ok_or_else(|| Error::config("dataset problems need a partition"))?;
            let (train, test_set) = load_dataset(ds_cfg)?;
            let parts: Partition = partition(&train, part_cfg.workers, part_cfg.mode, part_cfg.seed)?;
            let measure_seed = match ds_cfg {
                DatasetCfg::Blobs { seed, .. } => *seed,
                DatasetCfg::Idx { .. } => part_cfg.seed,
            };
            let mut objs: Vec<Arc<dyn Objective>> = Vec::with_capacity(part_cfg.workers);
            let classifier: Arc<dyn Classifier> = match problem {
                ProblemCfg::Logistic { minibatch, ridge } => {
                    for (w, idx) in parts.assignment.iter().enumerate() {
                        let (feats, labels) = shard(&train, idx);
                        let mut obj = LogisticProblem::new(
                            feats,
                            labels,
                            train.n_classes,
                            *minibatch,
                            *ridge,
                        )?;
                        let probes =
                            sigma_probe_points(obj.dim(), cfg.sigma_probes, measure_seed);
                        let sig = measure_sigma_sq(
                            &obj,
                            &probes,
                            cfg.sigma_draws,
                            measure_seed.wrapping_add(w as u64 * 1_000_003),
                        )?;
                        obj.set_noise_bound(sig);
                        objs.push(Arc::new(obj));
                    }
                    Arc::new(LogisticProblem::new(
                        vec![vec![0.0; train.feature_dim()]],
                        vec![0],
                        train.n_classes,
                        1,
                        *ridge,
                    )?)
                }
                ProblemCfg::Mlp { hidden, minibatch } => {
                    for (w, idx) in parts.assignment.iter().enumerate() {
                        let (feats, labels) = shard(&train, idx);
                        let mut obj = MlpProblem::new(
                            feats,
                            labels,
                            train.n_classes,
                            *hidden,
                            *minibatch,
                        )?;
                        let l = measure_smoothness(
                            &obj,
                            400,
                            1.0,
                            measure_seed.wrapping_add(w as u64 * 7_777_777),
                        )?;
                        obj.set_smoothness(l);
                        let probes =
                            sigma_probe_points(obj.dim(), cfg.sigma_probes, measure_seed);
                        let sig = measure_sigma_sq(
                            &obj,
                            &probes,
                            cfg.sigma_draws,
                            measure_seed.wrapping_add(w as u64 * 1_000_003),
                        )?;
                        obj.set_noise_bound(sig);
                        objs.push(Arc::new(obj));
                    }
                    Arc::new(MlpProblem::new(
                        vec![vec![0.0; train.feature_dim()]],
                        vec![0],
                        train.n_classes,
                        *hidden,
                        1,
                    )?)
                }
                ProblemCfg::Quadratic { .. } => {
                    return Err(Error::config("quadratic problems do not take a dataset"))
                }
            };
            let ws = WorkerSet::new(objs, cfg.f_inf_override.unwrap_or(0.0))?;
            let test = test_set.map(|ts| TestEvaluator {
                classifier,
                test_set: ts,
            });
            (ws, test)
        }
        (_, _) => {
            return Err(Error::config(
                "config mismatch between problem kind and dataset presence",
            ))
        }
    };
    if let Some(f_inf) = cfg.f_inf_override {
        workers.set_f_inf(f_inf);
    }

    let compressor = match &cfg.compressor {
        Some(c) => Some(c.resolve(workers.dim())?),
        None => None,
    };
    let contraction = compressor
        .map(|q| contraction_factor(q, workers.dim()))
        .unwrap_or(1.0);
    let gap = delta_inf(&workers)?;
    let constants = proposition_constants(
        cfg.algorithm,
        &ProblemConstants {
            smoothness: workers.smoothness(),
            local_steps: cfg.local.steps(),
            sigma_sq: workers.sigma_sq(),
            delta_inf: gap,
            contraction,
        },
    )?;
    Ok(BuiltExperiment {
        workers,
        test,
        compressor,
        contraction,
        constants,
        delta_inf: gap,
    })
}

fn engine_config(cfg: &ExperimentConfig, built: &BuiltExperiment, seed: u64) -> EngineConfig {
    EngineConfig {
        horizon: cfg.rounds,
        seed,
        schedule: cfg.schedule.clone(),
        local_op: cfg.local.clone(),
        aggregation: match built.compressor {
            Some(q) => Aggregation::ErrorFeedback(q),
            None => Aggregation::FullPrecision,
        },
        rescale_by_t: cfg.rescale_by_t,
        step_cap: Some(built.constants.step_cap),
        clamp_to_cap: cfg.clamp_to_cap,
        init: match cfg.init {
            InitCfg::Zeros => InitSpec::Zeros,
            InitCfg::Gaussian { scale } => InitSpec::Gaussian { scale },
        },
        trace: false,
    }
}

/// Result of a full multi-seed experiment.
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
    pub verdict: Option<VerdictReport>,
    pub constants: BoundConstants,
    pub contraction: f64,
    pub delta_inf: f64,
    pub f_inf: f64,
}

impl ExperimentOutcome {
    pub fn any_diverged(&self) -> bool {
        self.records.iter().any(|r| r.diverged_at.is_some())
    }
}

/// Runs every configured seed (in parallel), aggregates, and attaches the
/// theory verdict. Per-seed divergence is recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let built = build(cfg)?;
    let records: Vec<RunRecord> = {
        use rayon::prelude::*;
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                engine_run(&built.workers, &engine_config(cfg, &built, seed), built.test.as_ref())
                    .map(|(rec, _)| rec)
            })
            .collect::<Result<_>>()?
    };
    let agg = aggregate(&records)?;
    let verdict = build_verdict(cfg, &built.constants, &records, &agg)?;
    Ok(ExperimentOutcome {
        records,
        aggregate: agg,
        verdict,
        constants: built.constants,
        contraction: built.contraction,
        delta_inf: built.delta_inf,
        f_inf: built.workers.f_inf(),
    })
}

fn build_verdict(
    cfg: &ExperimentConfig,
    constants: &BoundConstants,
    records: &[RunRecord],
    agg: &Aggregate,
) -> Result<Option<VerdictReport>> {
    if agg.rows < 2 {
        return Ok(None);
    }
    let v_max = records
        .iter()
        .flat_map(|r| r.loss_gap.iter().cloned())
        .fold(0.0f64, f64::max);
    let se: Vec<f64> = agg
        .grad_norm_sq_std
        .iter()
        .map(|s| s / (agg.seeds as f64).sqrt())
        .collect();
    let measured = MeasuredRun {
        w_mean: agg.grad_norm_sq_mean.clone(),
        w_se: se,
        v0: agg.loss_gap_mean[0],
        v_max,
        seeds: agg.seeds,
        in_regime: records.iter().all(|r| r.in_regime),
    };
    match verify_run(&measured, constants, &cfg.schedule, cfg.r_override) {
        Ok(v) => Ok(Some(v)),
        // Bound undefined for these constants (e.g. step-decay with b1 = 0):
        // report no verdict rather than failing the run.
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    rounds_completed: usize,
    final_loss_gap: f64,
    final_loss_raw: f64,
    min_grad_norm_sq: f64,
    in_regime: bool,
    diverged_at: Option<usize>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: String,
    f_inf: f64,
    delta_inf: f64,
    contraction: f64,
    constants: &'a BoundConstants,
    per_seed: Vec<SeedSummary>,
    verdict: &'a Option<VerdictReport>,
}

pub fn render_summary_json(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> String {
    // The echo describes the experiment identity; the output location is
    // deliberately excluded so relocated reruns stay byte-identical.
    let mut echo_cfg = cfg.clone();
    echo_cfg.out_dir = None;
    let per_seed = outcome
        .records
        .iter()
        .map(|r| {
            let final_gap = *r.loss_gap.last().expect("non-empty record");
            SeedSummary {
                seed: r.seed,
                rounds_completed: r.rounds_completed(),
                final_loss_gap: final_gap,
                final_loss_raw: final_gap + outcome.f_inf,
                min_grad_norm_sq: r
                    .grad_norm_sq
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min),
                in_regime: r.in_regime,
                diverged_at: r.diverged_at,
            }
        })
        .collect();
    let summary = Summary {
        config: echo_cfg.to_canonical_text(),
        f_inf: outcome.f_inf,
        delta_inf: outcome.delta_inf,
        contraction: outcome.contraction,
        constants: &outcome.constants,
        per_seed,
        verdict: &outcome.verdict,
    };
    serde_json::to_string_pretty(&summary).expect("summary serialization")
}

/// Writes per-seed CSVs, the aggregate CSV, and the JSON summary; returns the
/// paths written.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for rec in &outcome.records {
        let p = dir.join(format!("run_seed{}.csv", rec.seed));
        std::fs::write(&p, render_run_csv(rec))?;
        paths.push(p);
    }
    let p = dir.join("aggregate.csv");
    std::fs::write(&p, render_aggregate_csv(&outcome.aggregate))?;
    paths.push(p);
    let p = dir.join("summary.json");
    std::fs::write(&p, render_summary_json(cfg, outcome))?;
    paths.push(p);
    Ok(paths)
}

/// Per-worker class histogram report for the configured partition.
pub fn partition_report(cfg: &ExperimentConfig) -> Result<String> {
    let (ds_cfg, part_cfg) = match (&cfg.dataset, &cfg.partition) {
        (Some(d), Some(p)) => (d, p),
        _ => {
            return Err(Error::config(
                "partition-report needs a dataset problem with a partition",
            ))
        }
    };
    let (train, _) = load_dataset(ds_cfg)?;
    let parts = partition(&train, part_cfg.workers, part_cfg.mode, part_cfg.seed)?;
    let mut out = String::from("worker,samples");
    for c in 0..train.n_classes {
        out.push_str(&format!(",class{c}"));
    }
    out.push('\n');
    for (w, idx) in parts.assignment.iter().enumerate() {
        let hist = train.class_histogram(idx);
        out.push_str(&format!("{w},{}", idx.len()));
        for h in hist {
            out.push_str(&format!(",{h}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("# dropped = {}\n", parts.dropped));
    Ok(out)
}

/// Constants-and-bounds report without simulating: V0 is evaluated at the
/// configured initial point under the first seed.
#[derive(Serialize)]
pub struct BoundsReport {
    pub constants: BoundConstants,
    pub contraction: f64,
    pub delta_inf: f64,
    pub v0: f64,
    pub theorem: String,
    pub bound: f64,
    pub in_regime: bool,
}

pub fn bounds_report(cfg: &ExperimentConfig) -> Result<BoundsReport> {
    use crate::schedules::{step_size, ScheduleSpec};
    let built = build(cfg)?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let ecfg = engine_config(cfg, &built, seed);
    let x0 = match &ecfg.init {
        InitSpec::Zeros => ParamVector::zeros(built.workers.dim()),
        InitSpec::Gaussian { scale } => {
            let mut rng = crate::numerics::RngStream::new(
                seed,
                crate::numerics::StreamId::new(0, 0, crate::numerics::Purpose::Init),
            );
            ParamVector::from_vec(
                (0..built.workers.dim())
                    .map(|_| scale * rng.standard_normal())
                    .collect(),
            )
        }
        InitSpec::Given(x) => x.clone(),
    };
    let v0 = built.workers.value(&x0) - built.workers.f_inf();
    let mut in_regime = true;
    for k in 0..cfg.rounds {
        if step_size(&cfg.schedule, k)? > built.constants.step_cap {
            in_regime = false;
            break;
        }
    }
    let (theorem, bound) = match cfg.schedule {
        ScheduleSpec::Fixed { c, horizon } => (
            "theorem1_fixed".to_string(),
            crate::theory::theorem1_bound(v0, &built.constants, c, horizon)?,
        ),
        ScheduleSpec::Diminishing { c, nu } => (
            "theorem2_diminishing".to_string(),
            crate::theory::theorem2_bound(v0, &built.constants, c, nu, cfg.rounds)?,
        ),
        ScheduleSpec::StepDecay {
            gamma0, decay_base, ..
        } => {
            let r = cfg.r_override.unwrap_or(v0 * 1.1);
            (
                "theorem3_stepdecay".to_string(),
                crate::theory::theorem3_bound(v0, &built.constants, gamma0, decay_base, r, cfg.rounds)?,
            )
        }
    };
    Ok(BoundsReport {
        constants: built.constants,
        contraction: built.contraction,
        delta_inf: built.delta_inf,
        v0,
        theorem,
        bound,
        in_regime,
    })
}

/// Experiment presets mirroring the reference training protocol at desk
/// scale: four algorithms crossed with the three partition modes, logistic
/// model on synthetic blobs, K = 400, n = 10, batch 64, T = 30 local steps,
/// inner learning rate 0.1, top-1% sparsifier, five seeds.
pub fn preset_configs(name: &str) -> Result<Vec<(String, String)>> {
    let schedule_block = match name {
        "fig-fixed" => "schedule.kind = fixed\nschedule.c = 2\n",
        "fig-diminishing" => "schedule.kind = diminishing\nschedule.c = 0.8\nschedule.nu = 0.51\n",
        "fig-stepdecay" => {
            "schedule.kind = stepdecay\nschedule.gamma0 = 0.8\nschedule.decay_base = 2\nschedule.period = 50\n"
        }
        other => {
            return Err(Error::config(format!(
                "unknown preset '{other}'; available: fig-fixed, fig-diminishing, fig-stepdecay"
            )))
        }
    };
    let mut out = Vec::new();
    for alg in ["fedavg", "fedprox", "ef-fedavg", "ef-fedprox"] {
        for mode in ["iid", "noniid2", "noniid1"] {
            let mut text = String::new();
            text.push_str(&format!("algorithm = {alg}\n"));
            text.push_str("problem.kind = logistic\n");
            text.push_str("problem.minibatch = 64\n");
            text.push_str("problem.ridge = 0.02\n");
            text.push_str("dataset.kind = blobs\n");
            text.push_str("dataset.classes = 10\n");
            text.push_str("dataset.per_class = 100\n");
            text.push_str("dataset.test_per_class = 20\n");
            text.push_str("dataset.dim = 15\n");
            text.push_str("dataset.spread = 3.5\n");
            text.push_str("dataset.seed = 0\n");
            text.push_str(&format!("partition.mode = {mode}\n"));
            text.push_str("partition.workers = 10\n");
            text.push_str("partition.seed = 0\n");
            if alg.ends_with("fedavg") {
                text.push_str("local.T = 30\n");
            } else {
                text.push_str("local.inner_lr = 0.1\nlocal.inner_iters = 50\n");
            }
            if alg.starts_with("ef-") {
                text.push_str("compressor.kind = topk\ncompressor.fraction = 0.01\n");
            }
            text.push_str(schedule_block);
            text.push_str("run.rounds = 400\n");
            text.push_str("run.seeds = 1,2,3,4,5\n");
            text.push_str("run.init = gaussian\nrun.init_scale = 0.1\n");
            // The reference protocol applies the schedule directly as the
            // local rate; no division by T.
            text.push_str("engine.rescale_by_t = false\n");
            out.push((format!("{name}-{alg}-{mode}"), text));
        }
    }
    Ok(out)
}
