use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use mrsur_core::harness::{self, Context, ExperimentConfig, Strategy, TestbedKind};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "mrsur", version, about = "Multi-fidelity sequential design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-dimensional two-level experiment.
    #[command(name = "run-1d")]
    Run1d(RunArgs),
    /// Stochastic damped-oscillator experiment.
    RunOscillator(RunArgs),
    /// Sequential design on a sampled multi-level Gaussian-process path.
    RunToy(RunArgs),
    /// Criterion field and cost/uncertainty Pareto front at the initial state.
    Pareto(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML file overriding the testbed defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Total budget, initial design included.
    #[arg(long)]
    budget: Option<f64>,
    /// mrsur | mrsur-batch:q | sur-fixed:δ; repeat to compare strategies on shared data.
    #[arg(long)]
    strategy: Vec<String>,
    /// Points per sequential step (turns mrsur into mrsur-batch:q).
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(kind: TestbedKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.testbed != kind {
        bail!("config describes testbed {:?}, this subcommand runs {:?}", cfg.testbed, kind);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn strategies(cfg: &ExperimentConfig, args: &RunArgs) -> Result<Vec<Strategy>> {
    let names = if args.strategy.is_empty() {
        vec![cfg.strategy.clone()]
    } else {
        args.strategy.clone()
    };
    names
        .iter()
        .map(|n| {
            let mut s: Strategy = n.parse()?;
            if let Some(q) = args.batch_size {
                if q == 0 {
                    bail!("--batch-size must be >= 1");
                }
                s.batch = q;
            }
            Ok(s)
        })
        .collect()
}

fn run(kind: TestbedKind, args: &RunArgs) -> Result<()> {
    let base = resolve(kind, args)?;
    let strategies = strategies(&base, args)?;
    let ctx = Context::new(&base)?;
    let root = harness::out_dir(&base);
    for s in &strategies {
        let mut cfg = base.clone();
        cfg.strategy = s.to_string();
        cfg.validate()?;
        let dir = if strategies.len() == 1 {
            root.clone()
        } else {
            root.join(cfg.strategy.replace(':', "_"))
        };
        let records = harness::run_experiment_in(&cfg, &ctx).with_context(|| format!("strategy {s}"))?;
        harness::export_results(&records, &cfg, &dir)?;
        for r in &records {
            println!(
                "{s} run {} seed {}: cost {} error {:.6} counts {:?}",
                r.rep,
                r.seed,
                r.final_cost(),
                r.final_error(),
                r.level_counts
            );
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn pareto(args: &RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::toy(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.to_string_lossy().into_owned();
    }
    if let Some(s) = args.strategy.first() {
        cfg.strategy = s.clone();
    }
    cfg.validate()?;
    let field = harness::initial_field(&cfg, 0)?;
    let dir = harness::out_dir(&cfg);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("pareto_iter_0.csv");
    field.write_csv(&path)?;
    let best = field.selected_record();
    println!(
        "H = {:.6}; {} candidates, {} on the front; selected δ = {} at {:?}",
        field.h,
        field.records.len(),
        field.pareto.len(),
        best.points[0].delta,
        best.points[0].u
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Run1d(a) => run(TestbedKind::Forrester, &a),
        Command::RunOscillator(a) => run(TestbedKind::Oscillator, &a),
        Command::RunToy(a) => run(TestbedKind::Toy, &a),
        Command::Pareto(a) => pareto(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
