use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use broil_cli::{
    exit_code, run_bench, run_birl, run_frontier, run_returns, run_solve, Algorithm, BenchConfig,
    EnvironmentConfig, ExperimentConfig, Measure,
};
use broil_cli::config::output_dir_or_default;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "broil", version, about = "Risk-aware policy optimization from reward posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep λ and write frontier.csv
    Frontier(ExperimentArgs),
    /// Write sorted per-sample returns for each algorithm to returns.csv
    Returns(ExperimentArgs),
    /// Solve once and write policy.json (and policy.txt for gridworlds)
    Solve(ExperimentArgs),
    /// Run Bayesian IRL and write posterior.json with diagnostics
    Birl(ExperimentArgs),
    /// Time the LP on parametric machine-replacement chains
    Bench(BenchArgs),
}

/// Flags override values from `--config`.
#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Machine-replacement spec (JSON)
    #[arg(long, conflicts_with_all = ["gridworld", "mdp"])]
    machine_replacement: Option<PathBuf>,
    /// Gridworld spec (JSON)
    #[arg(long, conflicts_with = "mdp")]
    gridworld: Option<PathBuf>,
    /// Tabular MDP (JSON)
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    posterior: Option<PathBuf>,
    #[arg(long)]
    demonstration: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    algorithm: Vec<Algorithm>,
    #[arg(long, value_enum)]
    measure: Option<Measure>,
    #[arg(long)]
    alpha: Option<f64>,
    /// One or more λ values, comma separated
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to $BROIL_OUTPUT_DIR, then ./out
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let env = match (self.machine_replacement, self.gridworld, self.mdp) {
            (Some(spec), _, _) => Some(EnvironmentConfig::MachineReplacement { spec }),
            (_, Some(spec), _) => Some(EnvironmentConfig::Gridworld { spec }),
            (_, _, Some(mdp)) => Some(EnvironmentConfig::Tabular { mdp }),
            _ => None,
        };
        let mut cfg = match (self.config, env) {
            (Some(path), env) => {
                let mut cfg = ExperimentConfig::load(&path)?;
                if let Some(env) = env {
                    cfg.environment = env;
                }
                cfg
            }
            (None, Some(env)) => ExperimentConfig::new(env),
            (None, None) => {
                return Err(broil_cli::InvalidConfig(
                    "give --config or one of --machine-replacement, --gridworld, --mdp".into(),
                )
                .into())
            }
        };
        if self.posterior.is_some() {
            cfg.posterior = self.posterior;
        }
        if self.demonstration.is_some() {
            cfg.demonstration = self.demonstration;
        }
        if !self.algorithm.is_empty() {
            cfg.algorithms = self.algorithm;
        }
        if let Some(m) = self.measure {
            cfg.measure = m;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if !self.lambda.is_empty() {
            cfg.lambdas = self.lambda;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct BenchArgs {
    /// State counts, comma separated
    #[arg(long, value_delimiter = ',', default_value = "100")]
    states: Vec<usize>,
    /// Posterior sample counts, comma separated
    #[arg(long, value_delimiter = ',', default_value = "200,2000")]
    samples: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Defaults to $BROIL_OUTPUT_DIR, then ./out
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Frontier(args) => {
            let cfg = args.into_config()?;
            println!("{}", run_frontier(&cfg, &cfg.resolved_output_dir())?.display());
        }
        Command::Returns(args) => {
            let cfg = args.into_config()?;
            println!("{}", run_returns(&cfg, &cfg.resolved_output_dir())?.display());
        }
        Command::Solve(args) => {
            let cfg = args.into_config()?;
            let out = cfg.resolved_output_dir();
            let summary = run_solve(&cfg, &out)?;
            println!(
                "{}: expected {:.6} cvar {:.6}",
                summary.algorithm.name(),
                summary.expected_psi,
                summary.cvar_psi
            );
            let table = out.join("policy.txt");
            if table.is_file() {
                print!("{}", std::fs::read_to_string(table)?);
            }
        }
        Command::Birl(args) => {
            let cfg = args.into_config()?;
            let (path, diag) = run_birl(&cfg, &cfg.resolved_output_dir())?;
            println!("{} (accept ratio {:.3})", path.display(), diag.accept_ratio);
        }
        Command::Bench(args) => {
            let out = output_dir_or_default(args.output_dir);
            let cfg = BenchConfig {
                states: args.states,
                samples: args.samples,
                trials: args.trials,
                seed: args.seed,
                alpha: args.alpha,
                lambda: args.lambda,
            };
            println!("{}", run_bench(&cfg, &out)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
