use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use broil_core::baselines::{lpal, maxent_irl};
use broil_core::broil::{frontier, psi_values, solve_broil, solve_max_return, ObjectiveKind};
use broil_core::environments::{
    build_machine_replacement, Cell, GridworldSpec, MachineReplacementSpec, DOWN, LEFT, RIGHT, UP,
};
use broil_core::mdp::{
    empirical_expert_feature_counts, empirical_occupancy, occupancy_from_policy, OccupancyVector,
    StochasticPolicy,
};
use broil_core::posterior::birl_mcmc;
use broil_core::risk::{cvar_alpha, DiscreteDistribution};
use serde::Serialize;

use crate::config::{Algorithm, Experiment, ExperimentConfig, InvalidConfig};

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn first_broil(cfg: &ExperimentConfig) -> Result<Algorithm> {
    let alg = cfg.algorithms[0];
    if alg.is_broil() {
        Ok(alg)
    } else {
        Err(InvalidConfig(format!("{} has no lambda frontier; use broil-robust or broil-regret", alg.name())).into())
    }
}

/// λ sweep of the first configured BROIL algorithm; writes `frontier.csv`.
pub fn run_frontier(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let alg = first_broil(cfg)?;
    let exp = Experiment::load(cfg)?;
    let kind = exp.objective_for(alg)?;
    let points = frontier(&exp.mdp, &exp.posterior, cfg.alpha, &cfg.lambdas, &kind)?;
    prepare_dir(out_dir)?;
    let path = out_dir.join("frontier.csv");
    let mut w = csv_writer(&path)?;
    for p in &points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(path)
}

/// Occupancy of the policy an algorithm produces on `exp`.
fn algorithm_occupancy(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    alg: Algorithm,
    lambda: f64,
) -> Result<(OccupancyVector, StochasticPolicy)> {
    match alg {
        Algorithm::BroilRobust | Algorithm::BroilRegret => {
            let sol = solve_broil(&exp.mdp, &exp.posterior, cfg.alpha, lambda, &exp.objective_for(alg)?)?;
            Ok((sol.u, sol.policy))
        }
        Algorithm::MeanReward => {
            let (u, _) = solve_max_return(&exp.mdp, &exp.posterior.mean_reward())?;
            let pi = broil_core::mdp::extract_policy(&u, &exp.mdp)?;
            Ok((u, pi))
        }
        Algorithm::Maxent => {
            let res = maxent_irl(&exp.mdp, &exp.demonstrations, &cfg.maxent_config(&exp.mdp))?;
            if !res.converged {
                eprintln!("warning: MaxEnt IRL stopped after {} iterations without converging", res.iterations);
            }
            Ok((occupancy_from_policy(&exp.mdp, &res.policy)?, res.policy))
        }
        Algorithm::Lpal => {
            let mu = empirical_expert_feature_counts(&exp.demonstrations, &exp.mdp)?;
            let res = lpal(&exp.mdp, &mu)?;
            Ok((res.occupancy, res.policy))
        }
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Sorted per-sample scores, one column per algorithm (and per λ for BROIL),
/// plus the demonstrator when one is available; writes `returns.csv`.
pub fn run_returns(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let exp = Experiment::load(cfg)?;
    let measure = exp.measure_objective(cfg.measure)?;
    let mut header = Vec::new();
    let mut columns = Vec::new();
    for &alg in &cfg.algorithms {
        if alg.is_broil() {
            for &lambda in &cfg.lambdas {
                let (u, _) = algorithm_occupancy(&exp, cfg, alg, lambda)?;
                header.push(format!("{}@{lambda}", alg.name()));
                columns.push(sorted(psi_values(&exp.posterior, u.as_slice(), &measure)?));
            }
        } else {
            let (u, _) = algorithm_occupancy(&exp, cfg, alg, 0.0)?;
            header.push(alg.name().to_string());
            columns.push(sorted(psi_values(&exp.posterior, u.as_slice(), &measure)?));
        }
    }
    if !exp.demonstrations.is_empty() {
        header.push("demonstrator".into());
        columns.push(sorted(demonstrator_scores(&exp, &measure)?));
    }
    prepare_dir(out_dir)?;
    let path = out_dir.join("returns.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(&header)?;
    for i in 0..exp.posterior.num_samples() {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(path)
}

/// Demonstrator's return per sample, `wᵢᵀμ̂_E` when weights exist, less the
/// measure's baseline.
fn demonstrator_scores(exp: &Experiment, measure: &ObjectiveKind) -> Result<Vec<f64>> {
    let returns = if exp.posterior.weights().is_some() {
        let mu = empirical_expert_feature_counts(&exp.demonstrations, &exp.mdp)?;
        ObjectiveKind::BaselineRegretFeatures(mu).baseline(&exp.posterior)?
    } else {
        let u = empirical_occupancy(&exp.demonstrations, &exp.mdp)?;
        exp.posterior.returns(u.as_slice())?
    };
    let base = measure.baseline(&exp.posterior)?;
    Ok(returns.iter().zip(&base).map(|(r, b)| r - b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub states: Vec<usize>,
    pub samples: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            states: vec![100],
            samples: vec![200, 2000],
            trials: 1,
            seed: 0,
            alpha: 0.99,
            lambda: 0.5,
        }
    }
}

#[derive(Debug, Serialize)]
struct BenchRow {
    num_states: usize,
    num_samples: usize,
    trial: usize,
    seconds: f64,
}

/// Times the soft-robust LP on parametric machine-replacement chains;
/// writes `bench.csv`. Trial `t` draws its posterior with seed `seed + t`.
pub fn run_bench(cfg: &BenchConfig, out_dir: &Path) -> Result<PathBuf> {
    if cfg.states.is_empty() || cfg.samples.is_empty() || cfg.trials == 0 {
        return Err(InvalidConfig("bench grids and trial count must be nonempty".into()).into());
    }
    if let Some(s) = cfg.states.iter().find(|s| **s < 2) {
        return Err(InvalidConfig(format!("states = {s} must be at least 2")).into());
    }
    if cfg.samples.contains(&0) {
        return Err(InvalidConfig("samples must be positive".into()).into());
    }
    if !(0.0..1.0).contains(&cfg.alpha) {
        return Err(InvalidConfig(format!("alpha = {} must lie in [0, 1)", cfg.alpha)).into());
    }
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(InvalidConfig(format!("lambda = {} must lie in [0, 1]", cfg.lambda)).into());
    }
    prepare_dir(out_dir)?;
    let path = out_dir.join("bench.csv");
    let mut w = csv_writer(&path)?;
    for &s in &cfg.states {
        for &n in &cfg.samples {
            for trial in 0..cfg.trials {
                let spec = MachineReplacementSpec::parametric(s, n, cfg.seed + trial as u64);
                let (mdp, post) = build_machine_replacement(&spec)?;
                let start = Instant::now();
                solve_broil(&mdp, &post, cfg.alpha, cfg.lambda, &ObjectiveKind::Robust)?;
                let seconds = start.elapsed().as_secs_f64();
                eprintln!("states {s} samples {n} trial {trial}: {seconds:.3}s");
                w.serialize(BenchRow {
                    num_states: s,
                    num_samples: n,
                    trial,
                    seconds,
                })?;
                w.flush()?;
            }
        }
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BirlDiagnostics {
    pub accept_ratio: f64,
    /// Chain length: burn-in plus thinned steps.
    pub proposals: usize,
    pub num_samples: usize,
    pub burn_in: usize,
    pub skip: usize,
    pub beta: f64,
    pub proposal_std: f64,
    pub seed: u64,
}

/// Runs Bayesian IRL on the configured demonstration; writes
/// `posterior.json` and `birl_diagnostics.json`.
pub fn run_birl(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(PathBuf, BirlDiagnostics)> {
    cfg.validate()?;
    let mut no_posterior = cfg.clone();
    no_posterior.posterior = None;
    no_posterior.algorithms = vec![Algorithm::BroilRobust];
    let birl = cfg.birl_config();
    // reuse the chain if loading the environment already ran it
    let exp = Experiment::load(&no_posterior)?;
    if exp.demonstrations.is_empty() {
        return Err(InvalidConfig("Bayesian IRL needs a demonstration".into()).into());
    }
    let run = match exp.birl_run {
        Some(run) => run,
        None => birl_mcmc(&exp.mdp, &exp.demonstrations, &birl)?,
    };
    let diag = BirlDiagnostics {
        accept_ratio: run.accept_ratio,
        proposals: run.proposals,
        num_samples: birl.num_samples,
        burn_in: birl.burn_in,
        skip: birl.skip,
        beta: birl.beta,
        proposal_std: birl.proposal_std,
        seed: birl.seed,
    };
    prepare_dir(out_dir)?;
    let path = out_dir.join("posterior.json");
    write_file(&path, &run.posterior.to_json_string()?)?;
    write_file(
        &out_dir.join("birl_diagnostics.json"),
        &serde_json::to_string_pretty(&diag)?,
    )?;
    Ok((path, diag))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub algorithm: Algorithm,
    pub lambda: Option<f64>,
    pub alpha: f64,
    pub expected_psi: f64,
    pub cvar_psi: f64,
    pub sigma_star: f64,
    pub policy: Vec<Vec<f64>>,
}

/// Solves with the first configured algorithm (and first λ for BROIL);
/// writes `policy.json`, plus `policy.txt` for gridworlds.
pub fn run_solve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SolveSummary> {
    cfg.validate()?;
    let exp = Experiment::load(cfg)?;
    let alg = cfg.algorithms[0];
    let lambda = cfg.lambdas[0];
    let (u, policy) = algorithm_occupancy(&exp, cfg, alg, lambda)?;
    let measure = if alg.is_broil() {
        exp.objective_for(alg)?
    } else {
        exp.measure_objective(cfg.measure)?
    };
    let psi = psi_values(&exp.posterior, u.as_slice(), &measure)?;
    let dist = DiscreteDistribution::new(psi, exp.posterior.probs().to_vec())?;
    let cvar = cvar_alpha(&dist, cfg.alpha)?;
    let summary = SolveSummary {
        algorithm: alg,
        lambda: alg.is_broil().then_some(lambda),
        alpha: cfg.alpha,
        expected_psi: dist.mean(),
        cvar_psi: cvar.value,
        sigma_star: cvar.sigma_star,
        policy: policy.rows(),
    };
    prepare_dir(out_dir)?;
    write_file(&out_dir.join("policy.json"), &serde_json::to_string_pretty(&summary)?)?;
    if let Some(spec) = &exp.gridworld {
        write_file(&out_dir.join("policy.txt"), &gridworld_table(spec, &policy))?;
    }
    Ok(summary)
}

/// Argmax arrows per cell, then every state's action probabilities.
pub fn gridworld_table(spec: &GridworldSpec, policy: &StochasticPolicy) -> String {
    let arrow = |a: usize| match a {
        UP => '^',
        DOWN => 'v',
        LEFT => '<',
        RIGHT => '>',
        _ => '?',
    };
    let mut out = String::new();
    for row in 0..spec.height {
        let line: String = (0..spec.width)
            .map(|col| {
                let s = spec.state(row, col);
                match spec.cell(s) {
                    Cell::Terminal => 'T',
                    _ => arrow(policy.argmax(s)),
                }
            })
            .collect();
        out.push_str(&line);
        out.push('\n');
    }
    out.push('\n');
    for s in 0..spec.num_states() {
        let (row, col) = spec.coords(s);
        out.push_str(&format!(
            "({row},{col}) {:?}: up {:.3} down {:.3} left {:.3} right {:.3}\n",
            spec.cell(s),
            policy.prob(s, UP),
            policy.prob(s, DOWN),
            policy.prob(s, LEFT),
            policy.prob(s, RIGHT),
        ));
    }
    out
}
