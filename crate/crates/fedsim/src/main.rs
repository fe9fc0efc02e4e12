//! Command-line front end for the federated simulation and bound-check
//! harness.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime divergence,
//! 4 bound violation beyond error bars (verify and oracle modes).

use clap::{Parser, Subcommand, ValueEnum};
use fedsim::harness::{
    bounds_report, partition_report, preset_configs, render_summary_json, run_experiment,
    write_outputs, ExperimentConfig,
};
use fedsim::theory::{soundness_fuzz, FuzzKind};
use fedsim::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Parser)]
#[command(
    name = "fedsim",
    about = "Federated optimization simulator with convergence-bound verification"
)]
struct Cli {
    /// Thread budget for worker- and seed-level parallelism (0 = default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Override the configured seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stdout rendering for report-style commands.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment over all seeds and write metrics files.
    Run { config: PathBuf },
    /// Print proposition constants and the schedule bound without simulating.
    Bounds { config: PathBuf },
    /// Run the experiment and check the measured trajectory against the bound.
    Verify { config: PathBuf },
    /// Descent-inequality soundness fuzz across all three schedule kinds.
    Oracle {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        fuzz_seed: u64,
    },
    /// Per-worker class histogram for the configured partition.
    PartitionReport { config: PathBuf },
    /// Write a named family of experiment configs.
    Preset {
        name: String,
        #[arg(long, default_value = "presets")]
        out_dir: PathBuf,
    },
}

fn load_config(path: &PathBuf, cli: &Cli) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_text(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Divergence { .. } => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn run_command(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(config, cli)?;
            let outcome = run_experiment(&cfg)?;
            let dir = cfg
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("out"));
            let paths = write_outputs(&cfg, &outcome, &dir)?;
            match cli.format {
                OutputFormat::Json => println!("{}", render_summary_json(&cfg, &outcome)),
                OutputFormat::Csv => {
                    for p in &paths {
                        println!("{}", p.display());
                    }
                }
            }
            if outcome.any_diverged() {
                eprintln!("warning: at least one seed diverged");
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds { config } => {
            let cfg = load_config(config, cli)?;
            let rep = bounds_report(&cfg)?;
            match cli.format {
                OutputFormat::Json => {
                    println!("{}", serde_json::to_string_pretty(&rep).expect("report json"))
                }
                OutputFormat::Csv => {
                    println!("b1 = {:.6}", rep.constants.b1);
                    println!("b2 = {:.6}", rep.constants.b2);
                    println!("b3 = {:.6}", rep.constants.b3);
                    println!("step_cap = {:.6}", rep.constants.step_cap);
                    println!("delta_inf = {:.6}", rep.delta_inf);
                    println!("contraction = {}", rep.contraction);
                    println!("v0 = {}", rep.v0);
                    println!("{} bound = {}", rep.theorem, rep.bound);
                    println!("in_regime = {}", rep.in_regime);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let cfg = load_config(config, cli)?;
            let outcome = run_experiment(&cfg)?;
            if let Some(dir) = &cfg.out_dir {
                write_outputs(&cfg, &outcome, dir)?;
            }
            match (&outcome.verdict, cli.format) {
                (Some(v), OutputFormat::Json) => {
                    println!("{}", serde_json::to_string_pretty(v).expect("verdict json"))
                }
                (Some(v), OutputFormat::Csv) => {
                    println!(
                        "{}: measured_min_W = {}, bound = {}, margin = {}, in_regime = {}, seeds = {}",
                        v.theorem, v.measured_min_w, v.bound, v.margin, v.in_regime, v.seeds
                    );
                }
                (None, _) => println!("no bound verdict available for this configuration"),
            }
            if outcome.any_diverged() {
                return Ok(ExitCode::from(3));
            }
            if outcome.verdict.as_ref().is_some_and(|v| v.violation) {
                eprintln!("bound violated beyond error bars");
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { trials, fuzz_seed } => {
            let mut total_violations = 0;
            for kind in [FuzzKind::Fixed, FuzzKind::Diminishing, FuzzKind::StepDecay] {
                let out = soundness_fuzz(kind, *trials, *fuzz_seed)?;
                total_violations += out.violations;
                match cli.format {
                    OutputFormat::Json => println!(
                        "{}",
                        serde_json::json!({
                            "schedule": format!("{kind:?}"),
                            "trials": out.trials,
                            "violations": out.violations,
                            "worst_margin": out.worst_margin,
                        })
                    ),
                    OutputFormat::Csv => println!(
                        "{kind:?}: trials = {}, violations = {}, worst_margin = {}",
                        out.trials, out.violations, out.worst_margin
                    ),
                }
            }
            if total_violations > 0 {
                eprintln!("{total_violations} bound violations found");
                return Ok(ExitCode::from(4));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::PartitionReport { config } => {
            let cfg = load_config(config, cli)?;
            print!("{}", partition_report(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name, out_dir } => {
            let configs = preset_configs(name)?;
            std::fs::create_dir_all(out_dir)?;
            for (slug, text) in configs {
                let path = out_dir.join(format!("{slug}.cfg"));
                std::fs::write(&path, text)?;
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let run_it = || match run_command(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    };
    if cli.threads > 0 {
        let pool = match rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
        {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: cannot build thread pool: {e}");
                return ExitCode::from(2);
            }
        };
        pool.install(run_it)
    } else {
        run_it()
    }
}
