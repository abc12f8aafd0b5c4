//! `stochflow` command-line driver.
//!
//! Exit status: 0 every check passed, 1 some check failed, 2 invalid
//! configuration or arguments, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochflow::diagonal::criteria_report;
use stochflow::error::{FlowError, Result};
use stochflow::flow::{chaos_flow, chaos_tail_bound, commutative_ito_flow, euler_flow, ChaosConfig};
use stochflow::harness::{
    compare_outputs, configured_diagonal, configured_family, exit_code, resolve_threads, run_experiment,
    sample_paths, suite_configs, with_threads, ExperimentConfig, Verdict,
};
use stochflow::noise::TimeGrid;
use stochflow::operators::operator_norm;

#[derive(Parser)]
#[command(name = "stochflow", version, about = "Linear stochastic flows: solvers and experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo sample size.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Worker threads (default: STOCHFLOW_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment (or the one named here).
    Simulate {
        #[arg(long)]
        experiment: Option<String>,
    },
    /// Chaos, Euler and closed-form terminal frames on one path set.
    Chaos,
    /// Inverse-flow convergence experiment.
    Invert,
    /// Existence, flow and spectrum criteria for the configured diagonal model.
    Diagonal,
    /// Schatten smoothing experiment.
    Schatten,
    /// Every experiment, run with 1 and with 8 threads; the CSVs must agree
    /// byte for byte.
    Validate {
        /// Run the suite once, skipping the determinism comparison.
        #[arg(long)]
        no_determinism: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if common.paths.is_some() {
        cfg.n_paths = common.paths;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn named(mut cfg: ExperimentConfig, name: &str) -> Result<ExperimentConfig> {
    cfg.experiment = name.into();
    cfg.validate()?;
    Ok(cfg)
}

fn report(result: Result<Verdict>) -> i32 {
    match &result {
        Ok(v) => {
            print!("{}", v.summary());
            println!("verdict: {}", v.config.output.join(v.experiment.name()).join("verdict.json").display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&result)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| FlowError::Io(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn chaos(cfg: &ExperimentConfig) -> Result<i32> {
    let family = configured_family(cfg)?;
    let n = cfg.grid.n_ladder.as_ref().and_then(|l| l.last().copied()).unwrap_or(1 << 14);
    let t = cfg.grid.t_end.unwrap_or(cfg.grid.s + 1.0);
    let grid = TimeGrid::new(cfg.grid.s, t, n)?;
    let k = family.noise_count();
    let paths = sample_paths(grid, k, cfg.seed, 0)?;
    let chaos_cfg = ChaosConfig::new(cfg.solver.chaos_order, k, cfg.solver.moment_l)?;
    let series = chaos_flow(&family, &paths, &chaos_cfg)?;
    let euler = euler_flow(None, &family, &paths)?;
    let dir = cfg.output.join("chaos");
    std::fs::create_dir_all(&dir)?;
    series.write_csv(std::fs::File::create(dir.join("chaos_flow.csv"))?)?;
    euler.write_csv(std::fs::File::create(dir.join("euler_flow.csv"))?)?;
    println!("chaos vs euler: {:.3e}", operator_norm(&(series.terminal() - euler.terminal()))?);
    if family.ensure_commuting().is_ok() {
        let closed = commutative_ito_flow(&family, &paths)?;
        println!("chaos vs closed form: {:.3e}", operator_norm(&(series.terminal() - closed.terminal()))?);
    }
    let bound = chaos_tail_bound(family.bound(), grid.horizon(), cfg.solver.moment_l, cfg.solver.chaos_order)?;
    println!("bound on the discarded chaos: {bound:.3e}");
    println!("frames: {}", dir.display());
    Ok(0)
}

fn diagonal(cfg: &ExperimentConfig) -> Result<i32> {
    let model = configured_diagonal(cfg)?;
    let horizon = cfg.diagonal.horizon.unwrap_or(1.0);
    let r = criteria_report(&model, 0.0, horizon, model.cutoff())?;
    println!("square-integrable solution: {}", r.l2.solvable);
    println!("flow criterion rho: {} (proof form {})", r.rho.rho.value, r.rho.proof_form);
    match (&r.classification, &r.classification_note) {
        (Some(c), _) => println!("classification: {c:?}"),
        (None, Some(note)) => println!("classification: none ({note})"),
        (None, None) => {}
    }
    if let Some(ts) = &r.three_series {
        println!("three series converge: {}", ts.all_converge());
    }
    let path = cfg.output.join("diagonal").join("criteria.json");
    write_json(&path, &r)?;
    println!("report: {}", path.display());
    Ok(0)
}

fn run_suite(cfg: &ExperimentConfig, out: PathBuf) -> Result<Vec<Result<Verdict>>> {
    let base = ExperimentConfig {
        output: out,
        ..cfg.clone()
    };
    Ok(suite_configs(&base).iter().map(run_experiment).collect())
}

fn validate(cfg: &ExperimentConfig, threads: usize, no_determinism: bool) -> Result<i32> {
    let root = cfg.output.join("validate");
    let (first, second) = if no_determinism {
        (root.join(format!("threads_{threads}")), None)
    } else {
        (root.join("threads_1"), Some(root.join("threads_8")))
    };
    let first_threads = if no_determinism { threads } else { 1 };
    let verdicts = with_threads(first_threads, || run_suite(cfg, first.clone()))??;
    let mut status = 0;
    for v in &verdicts {
        match v {
            Ok(v) => print!("{}", v.summary()),
            Err(e) => eprintln!("error: {e}"),
        }
        status = status.max(exit_code(v));
    }
    if let Some(second) = second {
        with_threads(8, || run_suite(cfg, second.clone()))??;
        let differ = compare_outputs(&first, &second)?;
        if differ.is_empty() {
            println!("PASS determinism: CSVs with 1 and 8 threads are identical");
        } else {
            println!("FAIL determinism: differing files {differ:?}");
            status = status.max(1);
        }
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = resolve_threads(cli.common.threads);
    let status = match load(&cli.common) {
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_schema() {
                2
            } else {
                3
            }
        }
        Ok(cfg) => {
            let outcome = with_threads(threads, || -> Result<i32> {
                match cli.command {
                    Command::Simulate { experiment } => {
                        let cfg = match experiment {
                            Some(name) => named(cfg, &name),
                            None => Ok(cfg),
                        };
                        Ok(report(cfg.and_then(|c| run_experiment(&c))))
                    }
                    Command::Invert => Ok(report(named(cfg, "inverse_flow_convergence").and_then(|c| run_experiment(&c)))),
                    Command::Schatten => Ok(report(named(cfg, "schatten_gamma").and_then(|c| run_experiment(&c)))),
                    Command::Chaos => chaos(&cfg),
                    Command::Diagonal => diagonal(&cfg),
                    Command::Validate { no_determinism } => validate(&cfg, threads, no_determinism),
                }
            })
            .and_then(|r| r);
            match outcome {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    if e.is_schema() {
                        2
                    } else {
                        3
                    }
                }
            }
        }
    };
    ExitCode::from(status as u8)
}
