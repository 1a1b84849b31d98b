//! Two apprenticeship-learning baselines: maximum-entropy IRL and the
//! feature-matching linear program (LPAL).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, logsumexp};
use crate::lp::{solve_lp, CooMatrix, LpStatus, StandardFormLp, VarBound, VariableMap};
use crate::mdp::{
    empirical_expert_feature_counts, extract_policy, Demonstration, OccupancyVector,
    StochasticPolicy, TabularMdp,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxEntConfig {
    /// Inverse temperature of the trajectory distribution.
    pub beta: f64,
    pub learning_rate: f64,
    pub horizon: usize,
    /// Stop once an update moves `w` by less than this (L2).
    pub convergence_eps: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl MaxEntConfig {
    /// Learning rate 0.01, tolerance 1e-5, β = 10, at most 5000 updates.
    pub fn with_horizon(horizon: usize) -> Self {
        MaxEntConfig {
            beta: 10.0,
            learning_rate: 0.01,
            horizon,
            convergence_eps: 1e-5,
            max_iters: 5000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} must be positive"),
                })
            }
        };
        positive("beta", self.beta)?;
        positive("convergence_eps", self.convergence_eps)?;
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                reason: format!("{} must be nonnegative", self.learning_rate),
            });
        }
        if self.horizon == 0 || self.max_iters == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon/max_iters",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Soft backward pass. `log_z[t][s]` is the log partition of `horizon − t`
/// remaining steps from `s`; `policies[t]` is the local policy at step `t`.
struct SoftPlan {
    log_z0: Vec<f64>,
    policies: Vec<Vec<f64>>,
}

fn soft_plan(mdp: &TabularMdp, w: &[f64], beta: f64, horizon: usize) -> Result<SoftPlan> {
    let r = mdp.reward_from_weights(w)?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: format!("{beta} must be finite and nonnegative"),
        });
    }
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let mut log_z_next = vec![0.0; s_n];
    let mut policies = vec![Vec::new(); horizon];
    let mut discount: Vec<f64> = Vec::with_capacity(horizon);
    let mut g = 1.0;
    for _ in 0..horizon {
        discount.push(g);
        g *= mdp.gamma();
    }
    for t in (0..horizon).rev() {
        let mut log_q = vec![0.0; s_n * a_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let terms: Vec<f64> = mdp
                    .successors(s, a)
                    .map(|(next, p)| p.ln() + log_z_next[next])
                    .collect();
                let cont = logsumexp(terms.iter().copied());
                log_q[s * a_n + a] = beta * discount[t] * r[mdp.sa(s, a)] + cont;
            }
        }
        let mut log_z = vec![0.0; s_n];
        let mut pi = vec![0.0; s_n * a_n];
        for s in 0..s_n {
            let row = &log_q[s * a_n..(s + 1) * a_n];
            let lz = logsumexp(row.iter().copied());
            log_z[s] = lz;
            for a in 0..a_n {
                pi[s * a_n + a] = (row[a] - lz).exp();
            }
        }
        policies[t] = pi;
        log_z_next = log_z;
    }
    Ok(SoftPlan {
        log_z0: log_z_next,
        policies,
    })
}

/// Discounted state-action visitation `Σ_t γ^t Pr(s_t = s, a_t = a)` over
/// `horizon` steps of the maximum-entropy trajectory distribution
/// `Pr(ξ | s₀) ∝ exp(β Σ_t γ^t r(s_t, a_t)) Π P(s_{t+1} | s_t, a_t)`, with
/// `s₀ ~ p₀` and `r = Φ w`.
pub fn maxent_expected_state_action_counts(
    mdp: &TabularMdp,
    w: &[f64],
    beta: f64,
    horizon: usize,
) -> Result<Vec<f64>> {
    let plan = soft_plan(mdp, w, beta, horizon)?;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let mut counts = vec![0.0; mdp.num_state_actions()];
    let mut d = mdp.p0().to_vec();
    let mut discount = 1.0;
    for pi in &plan.policies {
        let mut next = vec![0.0; s_n];
        for s in 0..s_n {
            if d[s] == 0.0 {
                continue;
            }
            for a in 0..a_n {
                let mass = d[s] * pi[s * a_n + a];
                counts[mdp.sa(s, a)] += discount * mass;
                for (ns, p) in mdp.successors(s, a) {
                    next[ns] += mass * p;
                }
            }
        }
        d = next;
        discount *= mdp.gamma();
    }
    Ok(counts)
}

/// `Σ_s p₀(s) log Z₀(s; w)`: the expected log partition at the first step.
/// Its gradient in `w` is `β Φᵀ counts`.
pub fn maxent_log_partition(mdp: &TabularMdp, w: &[f64], beta: f64, horizon: usize) -> Result<f64> {
    let plan = soft_plan(mdp, w, beta, horizon)?;
    Ok(mdp
        .p0()
        .iter()
        .zip(&plan.log_z0)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, z)| p * z)
        .sum())
}

/// First-step local policy of the maximum-entropy distribution; used as the
/// stationary policy a MaxEnt reward estimate induces.
pub fn maxent_policy(mdp: &TabularMdp, w: &[f64], beta: f64, horizon: usize) -> Result<StochasticPolicy> {
    let plan = soft_plan(mdp, w, beta, horizon.max(1))?;
    StochasticPolicy::new(mdp.num_states(), mdp.num_actions(), plan.policies[0].clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntResult {
    /// Unit-norm reward weights.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iters` ran out before the step size fell below tolerance.
    pub converged: bool,
    pub policy: StochasticPolicy,
}

fn normalize_or_keep(v: Vec<f64>, fallback: &[f64]) -> Vec<f64> {
    let n = linalg::norm2(&v);
    if n > 1e-300 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        fallback.to_vec()
    }
}

/// Projected gradient ascent on the demonstration log-likelihood, with `w`
/// kept on the unit sphere. The start point is drawn uniformly from the
/// sphere using `config.seed`.
pub fn maxent_irl(
    mdp: &TabularMdp,
    demos: &[Demonstration],
    config: &MaxEntConfig,
) -> Result<MaxEntResult> {
    config.validate()?;
    let mu_e = empirical_expert_feature_counts(demos, mdp)?;
    let k = mdp.num_features();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = loop {
        let v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let n = linalg::norm2(&v);
        if n > 1e-12 {
            break v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
        }
    };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let counts = maxent_expected_state_action_counts(mdp, &w, config.beta, config.horizon)?;
        let model = mdp.features().t_mul_vec(&counts);
        let step: Vec<f64> = w
            .iter()
            .zip(mu_e.iter().zip(&model))
            .map(|(wi, (e, m))| wi + config.learning_rate * (e - m))
            .collect();
        let next = normalize_or_keep(step, &w);
        let moved: f64 = next
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        w = next;
        if moved < config.convergence_eps {
            converged = true;
            break;
        }
    }
    let policy = maxent_policy(mdp, &w, config.beta, config.horizon)?;
    Ok(MaxEntResult {
        weights: w,
        iterations,
        converged,
        policy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpalResult {
    pub policy: StochasticPolicy,
    pub occupancy: OccupancyVector,
    /// Smallest achievable `‖Φᵀu − μ̂_E‖_∞`.
    pub max_deviation: f64,
}

/// Occupancy whose feature counts are closest to `mu_e` in the max norm:
///
/// ```text
/// minimize B   s.t.  Φᵀu − B·1 ≤ μ̂_E,  −Φᵀu − B·1 ≤ −μ̂_E,  flow constraints,  u ≥ 0
/// ```
pub fn lpal(mdp: &TabularMdp, mu_e: &[f64]) -> Result<LpalResult> {
    let k = mdp.num_features();
    check_len("expert feature counts", k, mu_e.len())?;
    if mu_e.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "mu_e",
            reason: "non-finite entry".into(),
        });
    }
    let sa = mdp.num_state_actions();
    let mut vars = VariableMap::default();
    let u_cols = vars.push("u", sa);
    let b_col = vars.push("max_deviation", 1).start;
    let n = vars.len();

    let mut objective = vec![0.0; n];
    objective[b_col] = 1.0;

    let mut eq_matrix = CooMatrix::new(mdp.num_states(), n);
    let gamma = mdp.gamma();
    for a in 0..mdp.num_actions() {
        for s in 0..mdp.num_states() {
            let col = u_cols.start + mdp.sa(s, a);
            eq_matrix.push(s, col, 1.0);
            for (next, p) in mdp.successors(s, a) {
                eq_matrix.push(next, col, -gamma * p);
            }
        }
    }

    let mut ineq_matrix = CooMatrix::new(2 * k, n);
    for j in 0..sa {
        for (f, v) in mdp.features().row(j) {
            ineq_matrix.push(f, u_cols.start + j, v);
            ineq_matrix.push(k + f, u_cols.start + j, -v);
        }
    }
    for f in 0..2 * k {
        ineq_matrix.push(f, b_col, -1.0);
    }
    let ineq_rhs = mu_e.iter().copied().chain(mu_e.iter().map(|x| -x)).collect();

    let mut bounds = vec![VarBound::NonNegative; n];
    bounds[b_col] = VarBound::Free;
    let lp = StandardFormLp {
        objective,
        eq_matrix,
        eq_rhs: mdp.p0().to_vec(),
        ineq_matrix,
        ineq_rhs,
        bounds,
        variable_map: vars,
    };
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::SolverStatus {
            context: "feature-matching LP",
            status: sol.status,
        });
    }
    let occupancy = OccupancyVector(sol.x[u_cols].to_vec());
    let policy = extract_policy(&occupancy, mdp)?;
    Ok(LpalResult {
        policy,
        occupancy,
        max_deviation: sol.x[b_col],
    })
}
