//! Reward posteriors: finite sets of reward hypotheses with probability mass.
//!
//! Two sources are provided. Bayesian IRL runs a Metropolis-Hastings chain
//! over linear reward weights on the unit sphere. The prior sampler draws
//! each state-action reward independently from a hand-specified
//! distribution.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so equal
//! seeds reproduce equal outputs bit for bit on a given build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_probability_vector, Error, Result};
use crate::linalg::{self, logsumexp};
use crate::mdp::{q_values, Demonstration, TabularMdp};

/// Where a posterior came from; carried through serialization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept_ratio: Option<f64>,
}

/// `N` reward hypotheses. `rewards[i]` is the state-action reward vector of
/// sample `i`; when the samples come from linear weights, `weights[i]` holds
/// `wᵢ` and `rewards[i] = Φ wᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PosteriorFile", into = "PosteriorFile")]
pub struct RewardPosterior {
    weights: Option<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    probs: Vec<f64>,
    provenance: Provenance,
}

/// On-disk posterior layout: sample-major arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosteriorFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    probs: Vec<f64>,
    #[serde(default)]
    metadata: Provenance,
}

impl TryFrom<PosteriorFile> for RewardPosterior {
    type Error = Error;

    fn try_from(f: PosteriorFile) -> Result<Self> {
        RewardPosterior::from_parts(f.weights, f.rewards, Some(f.probs))
            .map(|p| p.with_provenance(f.metadata))
    }
}

impl From<RewardPosterior> for PosteriorFile {
    fn from(p: RewardPosterior) -> Self {
        PosteriorFile {
            weights: p.weights,
            rewards: p.rewards,
            probs: p.probs,
            metadata: p.provenance,
        }
    }
}

impl RewardPosterior {
    /// Validates shapes and the probability vector; `probs` defaults to uniform.
    pub fn from_parts(
        weights: Option<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        probs: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = rewards.len();
        if n == 0 {
            return Err(Error::Empty("posterior"));
        }
        let dim = rewards[0].len();
        for r in &rewards {
            check_len("posterior reward sample", dim, r.len())?;
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "rewards",
                    reason: "non-finite entry".into(),
                });
            }
        }
        if let Some(w) = &weights {
            check_len("posterior weight samples", n, w.len())?;
            let k = w[0].len();
            for wi in w {
                check_len("posterior weight sample", k, wi.len())?;
                if wi.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "weights",
                        reason: "non-finite entry".into(),
                    });
                }
            }
        }
        let probs = match probs {
            Some(p) => {
                check_len("posterior probabilities", n, p.len())?;
                check_probability_vector("posterior probabilities", &p)?;
                p
            }
            None => vec![1.0 / n as f64; n],
        };
        Ok(RewardPosterior {
            weights,
            rewards,
            probs,
            provenance: Provenance::default(),
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn num_samples(&self) -> usize {
        self.rewards.len()
    }

    pub fn reward_dim(&self) -> usize {
        self.rewards[0].len()
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn weights(&self) -> Option<&[Vec<f64>]> {
        self.weights.as_deref()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Posterior-mean reward `R p`.
    pub fn mean_reward(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.reward_dim()];
        for (r, p) in self.rewards.iter().zip(&self.probs) {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += p * x;
            }
        }
        mean
    }

    /// Returns `Rᵀu`, one expected return per sample.
    pub fn returns(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("occupancy", self.reward_dim(), u.len())?;
        Ok(self.rewards.iter().map(|r| linalg::dot(r, u)).collect())
    }

    /// Checks dimensions against `mdp` and, for weight-based samples,
    /// that `rewards = Φ W` within `1e-10`.
    pub fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        check_len("posterior reward dimension", mdp.num_state_actions(), self.reward_dim())?;
        if let Some(w) = &self.weights {
            for (wi, ri) in w.iter().zip(&self.rewards) {
                let expect = mdp.reward_from_weights(wi)?;
                if expect.iter().zip(ri).any(|(a, b)| (a - b).abs() > 1e-10) {
                    return Err(Error::InvalidParameter {
                        name: "rewards",
                        reason: "rewards do not equal Φ·weights".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Multiplies every reward and weight sample by `c`.
    pub fn scaled(&self, c: f64) -> RewardPosterior {
        let scale = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            v.iter()
                .map(|col| col.iter().map(|x| x * c).collect())
                .collect()
        };
        RewardPosterior {
            weights: self.weights.as_ref().map(scale),
            rewards: scale(&self.rewards),
            probs: self.probs.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Posterior from linear weight samples: `R = Φ W`, uniform mass by default.
pub fn posterior_from_samples(
    weights: Vec<Vec<f64>>,
    mdp: &TabularMdp,
    probs: Option<Vec<f64>>,
) -> Result<RewardPosterior> {
    if weights.is_empty() {
        return Err(Error::Empty("weight samples"));
    }
    let rewards = weights
        .iter()
        .map(|w| mdp.reward_from_weights(w))
        .collect::<Result<Vec<_>>>()?;
    RewardPosterior::from_parts(Some(weights), rewards, probs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BirlConfig {
    /// Boltzmann inverse temperature.
    pub beta: f64,
    pub proposal_std: f64,
    pub burn_in: usize,
    /// Keep every `skip`-th post-burn-in state.
    pub skip: usize,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for BirlConfig {
    fn default() -> Self {
        BirlConfig {
            beta: 10.0,
            proposal_std: 0.2,
            burn_in: 500,
            skip: 5,
            num_samples: 2000,
            seed: 0,
        }
    }
}

impl BirlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("{} must be finite and nonnegative", self.beta),
            });
        }
        if !(self.proposal_std.is_finite() && self.proposal_std > 0.0) {
            return Err(Error::InvalidParameter {
                name: "proposal_std",
                reason: format!("{} must be positive", self.proposal_std),
            });
        }
        if self.skip == 0 {
            return Err(Error::InvalidParameter {
                name: "skip",
                reason: "must be at least 1".into(),
            });
        }
        if self.num_samples == 0 {
            return Err(Error::InvalidParameter {
                name: "num_samples",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Number of proposals the chain makes: `burn_in + skip · num_samples`.
    pub fn total_proposals(&self) -> usize {
        self.burn_in + self.skip * self.num_samples
    }
}

/// Boltzmann-rational log-likelihood of demonstrated state-action pairs,
/// `Σ [β Q*(s,a) − log Σ_b exp(β Q*(s,b))]` with `Q*` for reward `Φ w`.
pub fn birl_log_likelihood(
    mdp: &TabularMdp,
    demos: &[Demonstration],
    w: &[f64],
    beta: f64,
) -> Result<f64> {
    let r = mdp.reward_from_weights(w)?;
    let q = q_values(mdp, &r)?;
    let mut ll = 0.0;
    for demo in demos {
        demo.validate(mdp)?;
        for &(s, a) in &demo.steps {
            let scaled = (0..mdp.num_actions()).map(|b| beta * q.get(s, b));
            ll += beta * q.get(s, a) - logsumexp(scaled);
        }
    }
    Ok(ll)
}

/// Output of [`birl_mcmc`].
#[derive(Debug, Clone)]
pub struct BirlRun {
    pub posterior: RewardPosterior,
    /// Accepted proposals over all proposals, burn-in included.
    pub accept_ratio: f64,
    pub proposals: usize,
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let n = linalg::norm2(&w);
    if n > 0.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
    w
}

/// Metropolis-Hastings over unit-norm reward weights.
///
/// Proposals are `normalize(w + ε)` with `ε ~ N(0, proposal_std² I)` and are
/// accepted with probability `min(1, exp(ℓ(w') − ℓ(w)))`, i.e. under a flat
/// prior on the sphere. The projection makes the proposal slightly
/// asymmetric; the plain likelihood ratio ignores that, so the chain is an
/// approximation to exact sphere MCMC.
pub fn birl_mcmc(
    mdp: &TabularMdp,
    demos: &[Demonstration],
    config: &BirlConfig,
) -> Result<BirlRun> {
    config.validate()?;
    if demos.is_empty() {
        return Err(Error::Empty("demonstration set"));
    }
    for d in demos {
        d.validate(mdp)?;
    }
    let k = mdp.num_features();
    if k == 0 {
        return Err(Error::InvalidMdp("no reward features".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.proposal_std).map_err(|e| Error::InvalidParameter {
        name: "proposal_std",
        reason: e.to_string(),
    })?;

    let mut w = loop {
        let v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        if linalg::norm2(&v) > 1e-12 {
            break normalize(v);
        }
    };
    let mut ll = birl_log_likelihood(mdp, demos, &w, config.beta)?;
    let total = config.total_proposals();
    let mut accepted = 0usize;
    let mut samples = Vec::with_capacity(config.num_samples);
    for step in 0..total {
        let proposal: Vec<f64> = w.iter().map(|x| x + noise.sample(&mut rng)).collect();
        let u: f64 = rng.random();
        if linalg::norm2(&proposal) > 1e-12 {
            let proposal = normalize(proposal);
            let ll_new = birl_log_likelihood(mdp, demos, &proposal, config.beta)?;
            if u.ln() < ll_new - ll {
                w = proposal;
                ll = ll_new;
                accepted += 1;
            }
        }
        if step >= config.burn_in && (step - config.burn_in + 1).is_multiple_of(config.skip) {
            samples.push(w.clone());
        }
    }
    debug_assert_eq!(samples.len(), config.num_samples);
    let accept_ratio = accepted as f64 / total.max(1) as f64;
    let posterior = posterior_from_samples(samples, mdp, None)?.with_provenance(Provenance {
        source: Some("birl".into()),
        seed: Some(config.seed),
        config: serde_json::to_value(config).ok(),
        accept_ratio: Some(accept_ratio),
    });
    Ok(BirlRun {
        posterior,
        accept_ratio,
        proposals: total,
    })
}

/// Distribution of a single state-action reward. Costs modeled with a gamma
/// distribution are stored as negative rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryPrior {
    Constant { value: f64 },
    /// `std = 0` is accepted and degenerates to the mean.
    Normal { mean: f64, std: f64 },
    /// Reward `−X` with `X ~ Gamma(shape, scale)`.
    NegatedGamma { shape: f64, scale: f64 },
}

impl EntryPrior {
    fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        match *self {
            EntryPrior::Constant { value } if !value.is_finite() => {
                bad("value", format!("{value} is not finite"))
            }
            EntryPrior::Normal { mean, std } if !mean.is_finite() || !std.is_finite() || std < 0.0 => {
                bad("std", format!("normal({mean}, {std}) is invalid"))
            }
            EntryPrior::NegatedGamma { shape, scale }
                if !(shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0) =>
            {
                bad("shape/scale", format!("gamma({shape}, {scale}) needs positive parameters"))
            }
            _ => Ok(()),
        }
    }

    /// Mean of the reward this prior produces.
    pub fn mean(&self) -> f64 {
        match *self {
            EntryPrior::Constant { value } => value,
            EntryPrior::Normal { mean, .. } => mean,
            EntryPrior::NegatedGamma { shape, scale } => -shape * scale,
        }
    }
}

enum Sampler {
    Constant(f64),
    Normal(Normal<f64>),
    NegatedGamma(Gamma<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Constant(v) => *v,
            Sampler::Normal(d) => d.sample(rng),
            Sampler::NegatedGamma(d) => -d.sample(rng),
        }
    }
}

/// One independent prior per state-action pair, in `sa_index` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub entries: Vec<EntryPrior>,
}

/// Draws `num_samples` reward vectors, sample-major (all entries of sample 0,
/// then sample 1, ...). No weight samples are attached.
pub fn sample_prior_posterior(
    spec: &PriorSpec,
    mdp: &TabularMdp,
    num_samples: usize,
    seed: u64,
) -> Result<RewardPosterior> {
    check_len("prior entries", mdp.num_state_actions(), spec.entries.len())?;
    if num_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "num_samples",
            reason: "must be at least 1".into(),
        });
    }
    let samplers = spec
        .entries
        .iter()
        .map(|e| {
            e.validate()?;
            let param_err = |e: String| Error::InvalidParameter {
                name: "prior",
                reason: e,
            };
            Ok(match *e {
                EntryPrior::Constant { value } => Sampler::Constant(value),
                EntryPrior::Normal { mean, std } => {
                    Sampler::Normal(Normal::new(mean, std).map_err(|e| param_err(e.to_string()))?)
                }
                EntryPrior::NegatedGamma { shape, scale } => Sampler::NegatedGamma(
                    Gamma::new(shape, scale).map_err(|e| param_err(e.to_string()))?,
                ),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = (0..num_samples)
        .map(|_| samplers.iter().map(|s| s.draw(&mut rng)).collect())
        .collect();
    Ok(RewardPosterior::from_parts(None, rewards, None)?.with_provenance(Provenance {
        source: Some("prior".into()),
        seed: Some(seed),
        config: None,
        accept_ratio: None,
    }))
}
