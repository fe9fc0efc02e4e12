//! Line-oriented `key = value` configuration with dotted sections and strict
//! parsing: unknown keys and every validation problem are reported together.

use crate::compressors::CompressorSpec;
use crate::datasets::PartitionMode;
use crate::error::{Error, Result};
use crate::localops::{LocalOperatorSpec, ProximalSpec};
use crate::schedules::ScheduleSpec;
use crate::theory::AlgorithmKind;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

/// Raw parsed key/value store with consumption tracking.
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    errors: Vec<String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let key = k.trim().to_string();
                    let val = v.trim().to_string();
                    if key.is_empty() {
                        errors.push(format!("line {}: empty key", lineno + 1));
                    } else if entries.insert(key.clone(), val).is_some() {
                        errors.push(format!("line {}: duplicate key '{key}'", lineno + 1));
                    }
                }
                None => errors.push(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )),
            }
        }
        if errors.is_empty() {
            Ok(KvConfig {
                entries,
                consumed: BTreeSet::new(),
                errors,
            })
        } else {
            Err(Error::Config(errors))
        }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    pub fn opt_str(&mut self, key: &str) -> Option<String> {
        self.raw(key)
    }

    pub fn req_str(&mut self, key: &str) -> String {
        match self.raw(key) {
            Some(v) => v,
            None => {
                self.errors.push(format!("missing required key '{key}'"));
                String::new()
            }
        }
    }

    pub fn opt_f64(&mut self, key: &str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.errors.push(format!("key '{key}': '{v}' is not a number"));
                default
            }),
        }
    }

    pub fn req_f64(&mut self, key: &str) -> f64 {
        match self.raw(key) {
            None => {
                self.errors.push(format!("missing required key '{key}'"));
                f64::NAN
            }
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.errors.push(format!("key '{key}': '{v}' is not a number"));
                f64::NAN
            }),
        }
    }

    pub fn opt_usize(&mut self, key: &str, default: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.errors
                    .push(format!("key '{key}': '{v}' is not a non-negative integer"));
                default
            }),
        }
    }

    pub fn req_usize(&mut self, key: &str) -> usize {
        match self.raw(key) {
            None => {
                self.errors.push(format!("missing required key '{key}'"));
                0
            }
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.errors
                    .push(format!("key '{key}': '{v}' is not a non-negative integer"));
                0
            }),
        }
    }

    pub fn opt_u64(&mut self, key: &str, default: u64) -> u64 {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.errors
                    .push(format!("key '{key}': '{v}' is not a non-negative integer"));
                default
            }),
        }
    }

    pub fn opt_bool(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(v) => match v.as_str() {
                "true" | "yes" | "1" => true,
                "false" | "no" | "0" => false,
                _ => {
                    self.errors.push(format!("key '{key}': '{v}' is not a bool"));
                    default
                }
            },
        }
    }

    pub fn push_error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    /// Validates that every provided key was consumed and no errors piled up.
    pub fn finish(mut self) -> Result<()> {
        for key in self.entries.keys() {
            if !self.consumed.contains(key) {
                self.errors.push(format!("unknown key '{key}'"));
            }
        }
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(self.errors))
        }
    }
}

/// Which objective family a run optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemCfg {
    Quadratic {
        workers: usize,
        dim: usize,
        mu: f64,
        l_max: f64,
        rho: f64,
        sigma_sq: f64,
        seed: u64,
    },
    Logistic {
        minibatch: usize,
        ridge: f64,
    },
    Mlp {
        hidden: usize,
        minibatch: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetCfg {
    Blobs {
        classes: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        /// Optional cap on training samples for desk-scale runs.
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCfg {
    pub mode: PartitionMode,
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressorCfg {
    Identity,
    TopKAbsolute(usize),
    TopKFraction(f64),
    ScaledSign,
}

impl CompressorCfg {
    /// Resolves to a concrete compressor once the model dimension is known.
    pub fn resolve(self, dim: usize) -> Result<CompressorSpec> {
        match self {
            CompressorCfg::Identity => Ok(CompressorSpec::Identity),
            CompressorCfg::ScaledSign => Ok(CompressorSpec::ScaledSign),
            CompressorCfg::TopKAbsolute(k) => {
                if k > dim {
                    return Err(Error::config(format!(
                        "compressor.k = {k} exceeds model dimension {dim}"
                    )));
                }
                Ok(CompressorSpec::TopK { k })
            }
            CompressorCfg::TopKFraction(f) => {
                let k = ((f * dim as f64).ceil() as usize).clamp(1, dim);
                Ok(CompressorSpec::TopK { k })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitCfg {
    Zeros,
    Gaussian { scale: f64 },
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmKind,
    pub problem: ProblemCfg,
    pub dataset: Option<DatasetCfg>,
    pub partition: Option<PartitionCfg>,
    pub local: LocalOperatorSpec,
    pub compressor: Option<CompressorCfg>,
    pub schedule: ScheduleSpec,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub init: InitCfg,
    pub rescale_by_t: bool,
    pub clamp_to_cap: bool,
    pub f_inf_override: Option<f64>,
    pub r_override: Option<f64>,
    pub sigma_probes: usize,
    pub sigma_draws: usize,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = KvConfig::parse(text)?;

        let algorithm = match kv.req_str("algorithm").as_str() {
            "fedavg" => AlgorithmKind::FedAvg,
            "fedprox" => AlgorithmKind::FedProx,
            "ef-fedavg" => AlgorithmKind::EfFedAvg,
            "ef-fedprox" => AlgorithmKind::EfFedProx,
            "" => AlgorithmKind::FedAvg, // missing-key error already recorded
            other => {
                kv.push_error(format!(
                    "algorithm must be fedavg|fedprox|ef-fedavg|ef-fedprox, got '{other}'"
                ));
                AlgorithmKind::FedAvg
            }
        };
        let error_feedback = matches!(
            algorithm,
            AlgorithmKind::EfFedAvg | AlgorithmKind::EfFedProx
        );
        let averaging_family = matches!(
            algorithm,
            AlgorithmKind::FedAvg | AlgorithmKind::EfFedAvg
        );

        let problem_kind = kv.req_str("problem.kind");
        let (problem, needs_dataset) = match problem_kind.as_str() {
            "quadratic" => (
                ProblemCfg::Quadratic {
                    workers: kv.opt_usize("problem.workers", 10),
                    dim: kv.req_usize("problem.dim"),
                    mu: kv.opt_f64("problem.mu", 0.5),
                    l_max: kv.req_f64("problem.l_max"),
                    rho: kv.opt_f64("problem.rho", 0.0),
                    sigma_sq: kv.opt_f64("problem.sigma_sq", 0.0),
                    seed: kv.opt_u64("problem.seed", 0),
                },
                false,
            ),
            "logistic" => (
                ProblemCfg::Logistic {
                    minibatch: kv.opt_usize("problem.minibatch", 64),
                    ridge: kv.opt_f64("problem.ridge", 0.0),
                },
                true,
            ),
            "mlp" => (
                ProblemCfg::Mlp {
                    hidden: kv.opt_usize("problem.hidden", 16),
                    minibatch: kv.opt_usize("problem.minibatch", 64),
                },
                true,
            ),
            other => {
                kv.push_error(format!(
                    "problem.kind must be quadratic|logistic|mlp, got '{other}'"
                ));
                (
                    ProblemCfg::Quadratic {
                        workers: 1,
                        dim: 1,
                        mu: 1.0,
                        l_max: 1.0,
                        rho: 0.0,
                        sigma_sq: 0.0,
                        seed: 0,
                    },
                    false,
                )
            }
        };

        let dataset = if needs_dataset {
            match kv.req_str("dataset.kind").as_str() {
                "blobs" => Some(DatasetCfg::Blobs {
                    classes: kv.opt_usize("dataset.classes", 10),
                    per_class: kv.req_usize("dataset.per_class"),
                    test_per_class: kv.opt_usize("dataset.test_per_class", 0),
                    dim: kv.opt_usize("dataset.dim", 15),
                    spread: kv.opt_f64("dataset.spread", 1.0),
                    seed: kv.opt_u64("dataset.seed", 0),
                }),
                "idx" => Some(DatasetCfg::Idx {
                    images: PathBuf::from(kv.req_str("dataset.images")),
                    labels: PathBuf::from(kv.req_str("dataset.labels")),
                    test_images: kv.opt_str("dataset.test_images").map(PathBuf::from),
                    test_labels: kv.opt_str("dataset.test_labels").map(PathBuf::from),
                    limit: kv.opt_str("dataset.limit").map(|v| {
                        v.parse().unwrap_or_else(|_| {
                            kv.push_error(format!("dataset.limit: '{v}' is not an integer"));
                            0
                        })
                    }),
                }),
                other => {
                    kv.push_error(format!("dataset.kind must be blobs|idx, got '{other}'"));
                    None
                }
            }
        } else {
            None
        };

        let partition = if needs_dataset {
            let mode = match kv.req_str("partition.mode").as_str() {
                "iid" => PartitionMode::Iid,
                "noniid2" => PartitionMode::NonIid2,
                "noniid1" => PartitionMode::NonIid1,
                other => {
                    kv.push_error(format!(
                        "partition.mode must be iid|noniid2|noniid1, got '{other}'"
                    ));
                    PartitionMode::Iid
                }
            };
            Some(PartitionCfg {
                mode,
                workers: kv.opt_usize("partition.workers", 10),
                seed: kv.opt_u64("partition.seed", 0),
            })
        } else {
            if kv.opt_str("partition.mode").is_some()
                || kv.opt_str("partition.workers").is_some()
                || kv.opt_str("partition.seed").is_some()
            {
                kv.push_error("partition.* keys apply only to dataset problems".to_string());
            }
            None
        };

        let local = if averaging_family {
            LocalOperatorSpec::GradientSteps {
                steps: kv.opt_usize("local.T", 1),
            }
        } else {
            if kv.opt_str("local.T").is_some() {
                kv.push_error("local.T applies only to the averaging family (T = 1 for prox)");
            }
            LocalOperatorSpec::Proximal(ProximalSpec {
                inner_lr: kv.opt_f64("local.inner_lr", 0.1),
                inner_iters: kv.opt_usize("local.inner_iters", 50),
                tol: None,
            })
        };
        if averaging_family
            && (kv.opt_str("local.inner_lr").is_some() || kv.opt_str("local.inner_iters").is_some())
        {
            kv.push_error("local.inner_* keys apply only to the proximal family");
        }

        let compressor = if error_feedback {
            match kv.opt_str("compressor.kind").as_deref() {
                None => {
                    kv.push_error("error-feedback algorithms require compressor.kind");
                    None
                }
                Some("identity") => Some(CompressorCfg::Identity),
                Some("scaledsign") => Some(CompressorCfg::ScaledSign),
                Some("topk") => {
                    let k = kv.opt_str("compressor.k");
                    let f = kv.opt_str("compressor.fraction");
                    match (k, f) {
                        (Some(k), None) => match k.parse() {
                            Ok(k) => Some(CompressorCfg::TopKAbsolute(k)),
                            Err(_) => {
                                kv.push_error(format!("compressor.k: '{k}' is not an integer"));
                                None
                            }
                        },
                        (None, Some(f)) => match f.parse::<f64>() {
                            Ok(f) if f > 0.0 && f <= 1.0 => Some(CompressorCfg::TopKFraction(f)),
                            _ => {
                                kv.push_error(format!(
                                    "compressor.fraction: '{f}' must be a number in (0, 1]"
                                ));
                                None
                            }
                        },
                        (Some(_), Some(_)) => {
                            kv.push_error("set compressor.k or compressor.fraction, not both");
                            None
                        }
                        (None, None) => {
                            kv.push_error("topk compressor needs compressor.k or compressor.fraction");
                            None
                        }
                    }
                }
                Some(other) => {
                    kv.push_error(format!(
                        "compressor.kind must be identity|topk|scaledsign, got '{other}'"
                    ));
                    None
                }
            }
        } else {
            if kv.opt_str("compressor.kind").is_some()
                || kv.opt_str("compressor.k").is_some()
                || kv.opt_str("compressor.fraction").is_some()
            {
                kv.push_error("compressor.* keys apply only to error-feedback algorithms");
            }
            None
        };

        let rounds = kv.req_usize("run.rounds");
        let schedule = match kv.req_str("schedule.kind").as_str() {
            "fixed" => ScheduleSpec::Fixed {
                c: kv.req_f64("schedule.c"),
                horizon: rounds.max(1),
            },
            "diminishing" => ScheduleSpec::Diminishing {
                c: kv.req_f64("schedule.c"),
                nu: kv.req_f64("schedule.nu"),
            },
            "stepdecay" => ScheduleSpec::StepDecay {
                gamma0: kv.req_f64("schedule.gamma0"),
                decay_base: kv.opt_f64("schedule.decay_base", 2.0),
                period: kv.req_usize("schedule.period"),
            },
            other => {
                kv.push_error(format!(
                    "schedule.kind must be fixed|diminishing|stepdecay, got '{other}'"
                ));
                ScheduleSpec::Fixed {
                    c: 1.0,
                    horizon: rounds.max(1),
                }
            }
        };

        let seeds: Vec<u64> = match kv.opt_str("run.seeds") {
            None => vec![0],
            Some(list) => {
                let mut out = Vec::new();
                for item in list.split(',') {
                    match item.trim().parse() {
                        Ok(s) => out.push(s),
                        Err(_) => kv.push_error(format!(
                            "run.seeds: '{}' is not an integer",
                            item.trim()
                        )),
                    }
                }
                if out.is_empty() {
                    kv.push_error("run.seeds must list at least one seed");
                    vec![0]
                } else {
                    out
                }
            }
        };

        let init = match kv.opt_str("run.init").as_deref().unwrap_or("gaussian") {
            "zeros" => InitCfg::Zeros,
            "gaussian" => InitCfg::Gaussian {
                scale: kv.opt_f64("run.init_scale", 0.1),
            },
            other => {
                kv.push_error(format!("run.init must be zeros|gaussian, got '{other}'"));
                InitCfg::Zeros
            }
        };

        let cfg = ExperimentConfig {
            algorithm,
            problem,
            dataset,
            partition,
            local,
            compressor,
            schedule,
            rounds,
            seeds,
            init,
            rescale_by_t: kv.opt_bool("engine.rescale_by_t", true),
            clamp_to_cap: kv.opt_bool("engine.clamp_to_cap", false),
            f_inf_override: kv.opt_str("problem.f_inf").map(|v| {
                v.parse().unwrap_or_else(|_| {
                    kv.push_error(format!("problem.f_inf: '{v}' is not a number"));
                    0.0
                })
            }),
            r_override: kv.opt_str("theory.r").map(|v| {
                v.parse().unwrap_or_else(|_| {
                    kv.push_error(format!("theory.r: '{v}' is not a number"));
                    0.0
                })
            }),
            sigma_probes: kv.opt_usize("problem.sigma_probes", 2),
            sigma_draws: kv.opt_usize("problem.sigma_draws", 300),
            out_dir: kv.opt_str("output.dir").map(PathBuf::from),
        };

        if rounds == 0 {
            kv.push_error("run.rounds must be at least 1");
        }
        if let Err(Error::Config(list)) = cfg.schedule.validate() {
            for item in list {
                kv.push_error(item);
            }
        }
        kv.finish()?;
        Ok(cfg)
    }

    /// Canonical text form; parsing it reproduces the same resolved config.
    pub fn to_canonical_text(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        let alg = match self.algorithm {
            AlgorithmKind::FedAvg => "fedavg",
            AlgorithmKind::FedProx => "fedprox",
            AlgorithmKind::EfFedAvg => "ef-fedavg",
            AlgorithmKind::EfFedProx => "ef-fedprox",
        };
        lines.push(format!("algorithm = {alg}"));
        match &self.problem {
            ProblemCfg::Quadratic {
                workers,
                dim,
                mu,
                l_max,
                rho,
                sigma_sq,
                seed,
            } => {
                lines.push("problem.kind = quadratic".into());
                lines.push(format!("problem.workers = {workers}"));
                lines.push(format!("problem.dim = {dim}"));
                lines.push(format!("problem.mu = {mu}"));
                lines.push(format!("problem.l_max = {l_max}"));
                lines.push(format!("problem.rho = {rho}"));
                lines.push(format!("problem.sigma_sq = {sigma_sq}"));
                lines.push(format!("problem.seed = {seed}"));
            }
            ProblemCfg::Logistic { minibatch, ridge } => {
                lines.push("problem.kind = logistic".into());
                lines.push(format!("problem.minibatch = {minibatch}"));
                lines.push(format!("problem.ridge = {ridge}"));
            }
            ProblemCfg::Mlp { hidden, minibatch } => {
                lines.push("problem.kind = mlp".into());
                lines.push(format!("problem.hidden = {hidden}"));
                lines.push(format!("problem.minibatch = {minibatch}"));
            }
        }
        if let Some(ds) = &self.dataset {
            match ds {
                DatasetCfg::Blobs {
                    classes,
                    per_class,
                    test_per_class,
                    dim,
                    spread,
                    seed,
                } => {
                    lines.push("dataset.kind = blobs".into());
                    lines.push(format!("dataset.classes = {classes}"));
                    lines.push(format!("dataset.per_class = {per_class}"));
                    lines.push(format!("dataset.test_per_class = {test_per_class}"));
                    lines.push(format!("dataset.dim = {dim}"));
                    lines.push(format!("dataset.spread = {spread}"));
                    lines.push(format!("dataset.seed = {seed}"));
                }
                DatasetCfg::Idx {
                    images,
                    labels,
                    test_images,
                    test_labels,
                    limit,
                } => {
                    lines.push("dataset.kind = idx".into());
                    lines.push(format!("dataset.images = {}", images.display()));
                    lines.push(format!("dataset.labels = {}", labels.display()));
                    if let Some(p) = test_images {
                        lines.push(format!("dataset.test_images = {}", p.display()));
                    }
                    if let Some(p) = test_labels {
                        lines.push(format!("dataset.test_labels = {}", p.display()));
                    }
                    if let Some(l) = limit {
                        lines.push(format!("dataset.limit = {l}"));
                    }
                }
            }
        }
        if let Some(p) = &self.partition {
            let mode = match p.mode {
                PartitionMode::Iid => "iid",
                PartitionMode::NonIid2 => "noniid2",
                PartitionMode::NonIid1 => "noniid1",
            };
            lines.push(format!("partition.mode = {mode}"));
            lines.push(format!("partition.workers = {}", p.workers));
            lines.push(format!("partition.seed = {}", p.seed));
        }
        match &self.local {
            LocalOperatorSpec::GradientSteps { steps } => {
                lines.push(format!("local.T = {steps}"));
            }
            LocalOperatorSpec::Proximal(spec) => {
                lines.push(format!("local.inner_lr = {}", spec.inner_lr));
                lines.push(format!("local.inner_iters = {}", spec.inner_iters));
            }
        }
        if let Some(c) = &self.compressor {
            match c {
                CompressorCfg::Identity => lines.push("compressor.kind = identity".into()),
                CompressorCfg::ScaledSign => lines.push("compressor.kind = scaledsign".into()),
                CompressorCfg::TopKAbsolute(k) => {
                    lines.push("compressor.kind = topk".into());
                    lines.push(format!("compressor.k = {k}"));
                }
                CompressorCfg::TopKFraction(f) => {
                    lines.push("compressor.kind = topk".into());
                    lines.push(format!("compressor.fraction = {f}"));
                }
            }
        }
        match &self.schedule {
            ScheduleSpec::Fixed { c, .. } => {
                lines.push("schedule.kind = fixed".into());
                lines.push(format!("schedule.c = {c}"));
            }
            ScheduleSpec::Diminishing { c, nu } => {
                lines.push("schedule.kind = diminishing".into());
                lines.push(format!("schedule.c = {c}"));
                lines.push(format!("schedule.nu = {nu}"));
            }
            ScheduleSpec::StepDecay {
                gamma0,
                decay_base,
                period,
            } => {
                lines.push("schedule.kind = stepdecay".into());
                lines.push(format!("schedule.gamma0 = {gamma0}"));
                lines.push(format!("schedule.decay_base = {decay_base}"));
                lines.push(format!("schedule.period = {period}"));
            }
        }
        lines.push(format!("run.rounds = {}", self.rounds));
        lines.push(format!(
            "run.seeds = {}",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        match &self.init {
            InitCfg::Zeros => lines.push("run.init = zeros".into()),
            InitCfg::Gaussian { scale } => {
                lines.push("run.init = gaussian".into());
                lines.push(format!("run.init_scale = {scale}"));
            }
        }
        lines.push(format!("engine.rescale_by_t = {}", self.rescale_by_t));
        lines.push(format!("engine.clamp_to_cap = {}", self.clamp_to_cap));
        if let Some(f) = self.f_inf_override {
            lines.push(format!("problem.f_inf = {f}"));
        }
        if let Some(r) = self.r_override {
            lines.push(format!("theory.r = {r}"));
        }
        lines.push(format!("problem.sigma_probes = {}", self.sigma_probes));
        lines.push(format!("problem.sigma_draws = {}", self.sigma_draws));
        if let Some(dir) = &self.out_dir {
            lines.push(format!("output.dir = {}", dir.display()));
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "\
algorithm = fedavg
problem.kind = quadratic
problem.dim = 8
problem.l_max = 2.0
problem.workers = 5
schedule.kind = fixed
schedule.c = 1.0
run.rounds = 10
run.seeds = 1,2
local.T = 3
";

    #[test]
    fn parses_minimal_quadratic_config() {
        let cfg = ExperimentConfig::from_text(QUAD).unwrap();
        assert_eq!(cfg.rounds, 10);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.local, LocalOperatorSpec::GradientSteps { steps: 3 });
        assert!(cfg.compressor.is_none());
    }

    #[test]
    fn rejects_unknown_keys_and_lists_everything() {
        let text = format!("{QUAD}bogus.key = 1\nanother = x\nschedule.nu = 0.3\n");
        let err = ExperimentConfig::from_text(&text).unwrap_err();
        match err {
            Error::Config(list) => {
                let joined = list.join("; ");
                assert!(joined.contains("bogus.key"), "{joined}");
                assert!(joined.contains("another"), "{joined}");
                // schedule.nu does not apply to a fixed schedule.
                assert!(joined.contains("schedule.nu"), "{joined}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn compressor_requires_error_feedback() {
        let text = format!("{QUAD}compressor.kind = topk\ncompressor.k = 2\n");
        assert!(ExperimentConfig::from_text(&text).is_err());
    }

    #[test]
    fn error_feedback_requires_compressor() {
        let text = QUAD.replace("algorithm = fedavg", "algorithm = ef-fedavg");
        assert!(ExperimentConfig::from_text(&text).is_err());
    }

    #[test]
    fn partition_requires_dataset_problem() {
        let text = format!("{QUAD}partition.mode = iid\n");
        assert!(ExperimentConfig::from_text(&text).is_err());
    }

    #[test]
    fn canonical_round_trip_is_fixed_point() {
        let texts = [
            QUAD.to_string(),
            "\
algorithm = ef-fedprox
problem.kind = logistic
problem.minibatch = 16
dataset.kind = blobs
dataset.per_class = 30
partition.mode = noniid1
partition.workers = 10
compressor.kind = topk
compressor.fraction = 0.1
schedule.kind = diminishing
schedule.c = 0.8
schedule.nu = 0.51
run.rounds = 20
run.seeds = 7
local.inner_lr = 0.1
local.inner_iters = 40
"
            .to_string(),
        ];
        for text in texts {
            let a = ExperimentConfig::from_text(&text).unwrap();
            let b = ExperimentConfig::from_text(&a.to_canonical_text()).unwrap();
            assert_eq!(a, b);
            let c = ExperimentConfig::from_text(&b.to_canonical_text()).unwrap();
            assert_eq!(b, c);
        }
    }

    #[test]
    fn fraction_resolves_to_ceiled_k() {
        let c = CompressorCfg::TopKFraction(0.01);
        assert_eq!(c.resolve(210).unwrap(), CompressorSpec::TopK { k: 3 });
        let c = CompressorCfg::TopKFraction(1.0);
        assert_eq!(c.resolve(5).unwrap(), CompressorSpec::TopK { k: 5 });
        assert!(CompressorCfg::TopKAbsolute(9).resolve(5).is_err());
    }
}
