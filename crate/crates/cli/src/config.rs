//! Experiment configuration and the environment it resolves to.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use broil_core::baselines::MaxEntConfig;
use broil_core::broil::ObjectiveKind;
use broil_core::environments::{
    build_gridworld, build_machine_replacement, reference_demo, GridworldSpec,
    MachineReplacementSpec,
};
use broil_core::mdp::{empirical_expert_feature_counts, empirical_occupancy, Demonstration, TabularMdp};
use broil_core::posterior::{birl_mcmc, BirlConfig, BirlRun, RewardPosterior};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BROIL_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "out";

/// A configuration value outside its valid range. Maps to exit code 2.
#[derive(Debug)]
pub struct InvalidConfig(pub String);

impl fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for InvalidConfig {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidConfig(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    BroilRobust,
    BroilRegret,
    Maxent,
    Lpal,
    MeanReward,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BroilRobust => "broil-robust",
            Algorithm::BroilRegret => "broil-regret",
            Algorithm::Maxent => "maxent",
            Algorithm::Lpal => "lpal",
            Algorithm::MeanReward => "mean-reward",
        }
    }

    pub fn is_broil(self) -> bool {
        matches!(self, Algorithm::BroilRobust | Algorithm::BroilRegret)
    }

    fn needs_demonstration(self) -> bool {
        matches!(self, Algorithm::BroilRegret | Algorithm::Maxent | Algorithm::Lpal)
    }
}

/// How sorted-return columns score a policy against each reward sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    #[default]
    Return,
    BaselineRegret,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// Posterior drawn from the spec's cost priors.
    MachineReplacement { spec: PathBuf },
    /// Posterior from Bayesian IRL on the demonstration unless one is supplied.
    Gridworld { spec: PathBuf },
    /// Any tabular MDP file; needs an explicit posterior or a demonstration.
    Tabular { mdp: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxEntSettings {
    pub beta: f64,
    pub learning_rate: f64,
    /// Defaults to the number of states.
    pub horizon: Option<usize>,
    pub convergence_eps: f64,
    pub max_iters: usize,
}

impl Default for MaxEntSettings {
    fn default() -> Self {
        let base = MaxEntConfig::with_horizon(1);
        MaxEntSettings {
            beta: base.beta,
            learning_rate: base.learning_rate,
            horizon: None,
            convergence_eps: base.convergence_eps,
            max_iters: base.max_iters,
        }
    }
}

impl MaxEntSettings {
    pub fn resolve(&self, mdp: &TabularMdp, seed: u64) -> MaxEntConfig {
        MaxEntConfig {
            beta: self.beta,
            learning_rate: self.learning_rate,
            horizon: self.horizon.unwrap_or(mdp.num_states()),
            convergence_eps: self.convergence_eps,
            max_iters: self.max_iters,
            seed,
        }
    }
}

fn default_alpha() -> f64 {
    0.95
}

fn default_lambdas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::BroilRobust]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    /// Precomputed posterior; replaces the one the environment would build.
    #[serde(default)]
    pub posterior: Option<PathBuf>,
    /// Demonstration file; the gridworld falls back to its reference demo.
    #[serde(default)]
    pub demonstration: Option<PathBuf>,
    /// `frontier` and `solve` use the first entry; `returns` uses all.
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub measure: Measure,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub birl: BirlConfig,
    #[serde(default)]
    pub maxent: MaxEntSettings,
    /// Overrides every seed in the environment and sub-configs when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(environment: EnvironmentConfig) -> Self {
        ExperimentConfig {
            environment,
            posterior: None,
            demonstration: None,
            algorithms: default_algorithms(),
            measure: Measure::default(),
            alpha: default_alpha(),
            lambdas: default_lambdas(),
            birl: BirlConfig::default(),
            maxent: MaxEntSettings::default(),
            seed: None,
            output_dir: None,
        }
    }

    /// Reads a JSON config; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.environment {
            EnvironmentConfig::MachineReplacement { spec } | EnvironmentConfig::Gridworld { spec } => fix(spec),
            EnvironmentConfig::Tabular { mdp } => fix(mdp),
        }
        if let Some(p) = &mut self.posterior {
            fix(p);
        }
        if let Some(p) = &mut self.demonstration {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha = {} must lie in [0, 1)", self.alpha)));
        }
        if self.lambdas.is_empty() {
            return Err(invalid("lambda grid is empty"));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(invalid(format!("lambda = {l} must lie in [0, 1]")));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithm selected"));
        }
        self.birl
            .validate()
            .map_err(|e| invalid(format!("birl: {e}")))?;
        self.maxent
            .resolve(&placeholder_mdp(), 0)
            .validate()
            .map_err(|e| invalid(format!("maxent: {e}")))?;
        let mut files: Vec<&Path> = match &self.environment {
            EnvironmentConfig::MachineReplacement { spec } | EnvironmentConfig::Gridworld { spec } => vec![spec],
            EnvironmentConfig::Tabular { mdp } => vec![mdp],
        };
        files.extend(self.posterior.as_deref());
        files.extend(self.demonstration.as_deref());
        if let Some(missing) = files.iter().find(|p| !p.is_file()) {
            return Err(invalid(format!("file not found: {}", missing.display())));
        }
        Ok(())
    }

    pub fn birl_config(&self) -> BirlConfig {
        let mut cfg = self.birl.clone();
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg
    }

    pub fn maxent_config(&self, mdp: &TabularMdp) -> MaxEntConfig {
        self.maxent.resolve(mdp, self.seed.unwrap_or(0))
    }

    /// `--output-dir`/config value, then the environment variable, then `out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        output_dir_or_default(self.output_dir.clone())
    }
}

/// `explicit`, else the environment variable, else `out`.
pub fn output_dir_or_default(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
}

fn placeholder_mdp() -> TabularMdp {
    TabularMdp::new(0.5, vec![1.0], &[vec![vec![1.0]]], &[vec![0.0]]).expect("static MDP")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Everything an experiment command needs, built from a config.
pub struct Experiment {
    pub mdp: TabularMdp,
    pub posterior: RewardPosterior,
    pub demonstrations: Vec<Demonstration>,
    pub gridworld: Option<GridworldSpec>,
    /// Present when the posterior came from a fresh MCMC run.
    pub birl_run: Option<BirlRun>,
}

impl Experiment {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (mdp, prior_posterior, gridworld) = match &cfg.environment {
            EnvironmentConfig::MachineReplacement { spec } => {
                let mut spec = MachineReplacementSpec::from_json_str(&read(spec)?)
                    .map_err(|e| invalid(format!("{}: {e}", spec.display())))?;
                if let Some(seed) = cfg.seed {
                    spec.seed = seed;
                }
                let (mdp, post) = build_machine_replacement(&spec)?;
                (mdp, Some(post), None)
            }
            EnvironmentConfig::Gridworld { spec } => {
                let spec = GridworldSpec::from_json_str(&read(spec)?)
                    .map_err(|e| invalid(format!("{}: {e}", spec.display())))?;
                (build_gridworld(&spec)?, None, Some(spec))
            }
            EnvironmentConfig::Tabular { mdp } => {
                let m = TabularMdp::from_json_str(&read(mdp)?)
                    .map_err(|e| invalid(format!("{}: {e}", mdp.display())))?;
                (m, None, None)
            }
        };

        let demonstrations = match (&cfg.demonstration, &gridworld) {
            (Some(path), _) => {
                let demo: Demonstration = serde_json::from_str(&read(path)?)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                demo.validate(&mdp)?;
                vec![demo]
            }
            (None, Some(spec)) if *spec == GridworldSpec::reference() => vec![reference_demo(spec)?],
            _ => Vec::new(),
        };

        let mut birl_run = None;
        let posterior = if let Some(path) = &cfg.posterior {
            RewardPosterior::from_json_str(&read(path)?)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?
        } else if let Some(post) = prior_posterior {
            post
        } else if !demonstrations.is_empty() {
            let run = birl_mcmc(&mdp, &demonstrations, &cfg.birl_config())?;
            let post = run.posterior.clone();
            birl_run = Some(run);
            post
        } else {
            return Err(invalid(
                "no posterior: supply a posterior file or a demonstration for Bayesian IRL",
            ));
        };
        posterior.check_against(&mdp)?;

        let exp = Experiment {
            mdp,
            posterior,
            demonstrations,
            gridworld,
            birl_run,
        };
        for alg in &cfg.algorithms {
            if alg.needs_demonstration() && exp.demonstrations.is_empty() {
                return Err(invalid(format!("{} needs a demonstration", alg.name())));
            }
        }
        if cfg.measure == Measure::BaselineRegret && exp.demonstrations.is_empty() {
            return Err(invalid("baseline-regret measure needs a demonstration"));
        }
        Ok(exp)
    }

    /// Regret baseline: the demonstrator's feature counts when the posterior
    /// carries weight samples, otherwise its empirical occupancy.
    pub fn regret_objective(&self) -> Result<ObjectiveKind> {
        if self.posterior.weights().is_some() {
            Ok(ObjectiveKind::BaselineRegretFeatures(
                empirical_expert_feature_counts(&self.demonstrations, &self.mdp)?,
            ))
        } else {
            Ok(ObjectiveKind::BaselineRegretOccupancy(
                empirical_occupancy(&self.demonstrations, &self.mdp)?.0,
            ))
        }
    }

    pub fn objective_for(&self, alg: Algorithm) -> Result<ObjectiveKind> {
        match alg {
            Algorithm::BroilRegret => self.regret_objective(),
            _ => Ok(ObjectiveKind::Robust),
        }
    }

    pub fn measure_objective(&self, measure: Measure) -> Result<ObjectiveKind> {
        match measure {
            Measure::Return => Ok(ObjectiveKind::Robust),
            Measure::BaselineRegret => self.regret_objective(),
        }
    }
}
