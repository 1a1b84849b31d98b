//! Soft-robust policy optimization over a reward posterior.
//!
//! For a posterior with reward samples `R = [r₁ … r_N]`, probabilities `p`
//! and a per-sample score `ψᵢ(u) = rᵢᵀu − bᵢ`, the optimizer solves
//!
//! ```text
//! maximize  λ·pᵀψ(u) + (1 − λ)·(σ − pᵀ[σ·1 − ψ(u)]₊ / (1 − α))
//! ```
//!
//! over occupancy measures `u`. The positive part is linearized with
//! auxiliary `z ≥ 0`, giving one LP in `[u, z, σ]`. The baseline `b` is zero
//! for the robust objective, `Rᵀu_E` when comparing against a demonstrator's
//! occupancy and `Wᵀμ̂_E` when comparing against its feature counts.
//!
//! The primal LP has one row per state plus one per posterior sample. Its
//! Lagrangian dual has one row per state-action pair plus one, with the
//! sample multipliers held as boxed columns. [`solve_broil`] solves
//! whichever has fewer rows and reads the occupancy off the dual prices
//! when it goes through the dual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::lp::{solve_lp, CooMatrix, LpStatus, StandardFormLp, VarBound, VariableMap};
use crate::mdp::{extract_policy, OccupancyVector, StochasticPolicy, TabularMdp};
use crate::posterior::RewardPosterior;
use crate::risk::{cvar_alpha, DiscreteDistribution};

/// What each reward sample's return is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "baseline", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `ψᵢ = rᵢᵀu`
    Robust,
    /// `ψᵢ = rᵢᵀ(u − u_E)` for a demonstrator occupancy `u_E`.
    BaselineRegretOccupancy(Vec<f64>),
    /// `ψᵢ = rᵢᵀu − wᵢᵀμ̂_E`; the posterior must carry weight samples.
    BaselineRegretFeatures(Vec<f64>),
}

impl ObjectiveKind {
    /// Per-sample baseline `b`.
    pub fn baseline(&self, posterior: &RewardPosterior) -> Result<Vec<f64>> {
        let n = posterior.num_samples();
        match self {
            ObjectiveKind::Robust => Ok(vec![0.0; n]),
            ObjectiveKind::BaselineRegretOccupancy(u_e) => {
                check_len("baseline occupancy", posterior.reward_dim(), u_e.len())?;
                posterior.returns(u_e)
            }
            ObjectiveKind::BaselineRegretFeatures(mu_e) => {
                let w = posterior.weights().ok_or(Error::InvalidParameter {
                    name: "posterior",
                    reason: "feature-count baseline needs weight samples".into(),
                })?;
                check_len("baseline feature counts", w[0].len(), mu_e.len())?;
                Ok(w.iter().map(|wi| linalg::dot(wi, mu_e)).collect())
            }
        }
    }
}

/// Per-sample scores `ψᵢ(u) = rᵢᵀu − bᵢ`.
pub fn psi_values(
    posterior: &RewardPosterior,
    u: &[f64],
    kind: &ObjectiveKind,
) -> Result<Vec<f64>> {
    let base = kind.baseline(posterior)?;
    let mut psi = posterior.returns(u)?;
    psi.iter_mut().zip(&base).for_each(|(x, b)| *x -= b);
    Ok(psi)
}

fn check_risk_params(alpha: f64, lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("{alpha} not in [0, 1)"),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("{lambda} not in [0, 1]"),
        });
    }
    Ok(())
}

/// Appends the flow equalities `Σ_a (I − γP_aᵀ) u^a = p₀` for the `u` block
/// starting at column 0.
fn push_flow_constraints(mdp: &TabularMdp, eq: &mut CooMatrix) {
    let gamma = mdp.gamma();
    for a in 0..mdp.num_actions() {
        for s in 0..mdp.num_states() {
            let col = mdp.sa(s, a);
            let mut diag = 1.0;
            for (next, p) in mdp.successors(s, a) {
                if next == s {
                    diag -= gamma * p;
                } else {
                    eq.push(next, col, -gamma * p);
                }
            }
            eq.push(s, col, diag);
        }
    }
}

/// Builds the minimization LP whose optimum is the negated soft-robust
/// maximum, up to the constant `λ·pᵀb`, which is left out of the LP.
pub fn build_broil_lp(
    mdp: &TabularMdp,
    posterior: &RewardPosterior,
    alpha: f64,
    lambda: f64,
    kind: &ObjectiveKind,
) -> Result<StandardFormLp> {
    check_risk_params(alpha, lambda)?;
    check_len("posterior reward dimension", mdp.num_state_actions(), posterior.reward_dim())?;
    let baseline = kind.baseline(posterior)?;
    let (sa, n) = (mdp.num_state_actions(), posterior.num_samples());

    let mut vars = VariableMap::default();
    let u_cols = vars.push("u", sa);
    let z_cols = vars.push("z", n);
    let sigma_col = vars.push("sigma", 1).start;
    let num_vars = vars.len();

    let mut objective = vec![0.0; num_vars];
    for (c, m) in objective[u_cols.clone()].iter_mut().zip(posterior.mean_reward()) {
        *c = -lambda * m;
    }
    let tail_weight = (1.0 - lambda) / (1.0 - alpha);
    for (c, p) in objective[z_cols.clone()].iter_mut().zip(posterior.probs()) {
        *c = tail_weight * p;
    }
    objective[sigma_col] = -(1.0 - lambda);

    let mut eq_matrix = CooMatrix::new(mdp.num_states(), num_vars);
    push_flow_constraints(mdp, &mut eq_matrix);

    // σ − rᵢᵀu − zᵢ ≤ −bᵢ
    let mut ineq_matrix = CooMatrix::new(n, num_vars);
    for (i, r) in posterior.rewards().iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            ineq_matrix.push(i, u_cols.start + j, -v);
        }
        ineq_matrix.push(i, z_cols.start + i, -1.0);
        ineq_matrix.push(i, sigma_col, 1.0);
    }

    let mut bounds = vec![VarBound::NonNegative; num_vars];
    bounds[sigma_col] = VarBound::Free;
    Ok(StandardFormLp {
        objective,
        eq_matrix,
        eq_rhs: mdp.p0().to_vec(),
        ineq_matrix,
        ineq_rhs: baseline.iter().map(|b| -b).collect(),
        bounds,
        variable_map: vars,
    })
}

/// Lagrangian dual of [`build_broil_lp`], as a minimization whose optimum
/// is the negated primal optimum:
///
/// ```text
/// minimize  −p₀ᵀy − bᵀm
/// s.t.      Aᵀy + R m ≤ −λ·R p    (one row per state-action pair)
///           1ᵀm = 1 − λ
///           0 ≤ mᵢ ≤ (1 − λ) pᵢ / (1 − α),  y free
/// ```
///
/// where `A` is the flow matrix. The prices of the state-action rows are
/// the negated occupancy.
pub fn build_broil_dual_lp(
    mdp: &TabularMdp,
    posterior: &RewardPosterior,
    alpha: f64,
    lambda: f64,
    kind: &ObjectiveKind,
) -> Result<StandardFormLp> {
    check_risk_params(alpha, lambda)?;
    check_len("posterior reward dimension", mdp.num_state_actions(), posterior.reward_dim())?;
    let baseline = kind.baseline(posterior)?;
    let (s_n, sa, n) = (mdp.num_states(), mdp.num_state_actions(), posterior.num_samples());

    let mut vars = VariableMap::default();
    let y_cols = vars.push("values", s_n);
    let m_cols = vars.push("sample_weights", n);
    let num_vars = vars.len();

    let mut objective = vec![0.0; num_vars];
    for (c, p) in objective[y_cols.clone()].iter_mut().zip(mdp.p0()) {
        *c = -p;
    }
    for (c, b) in objective[m_cols.clone()].iter_mut().zip(&baseline) {
        *c = -b;
    }

    // transpose of the flow block: row (s, a) holds column (s, a) of A
    let mut flow = CooMatrix::new(s_n, sa);
    push_flow_constraints(mdp, &mut flow);
    let mut ineq_matrix = CooMatrix::new(sa, num_vars);
    for &(state, col, v) in &flow.entries {
        ineq_matrix.push(col, y_cols.start + state, v);
    }
    for (i, r) in posterior.rewards().iter().enumerate() {
        for (row, v) in r.iter().enumerate() {
            ineq_matrix.push(row, m_cols.start + i, *v);
        }
    }
    let ineq_rhs = posterior.mean_reward().iter().map(|m| -lambda * m).collect();

    let mut eq_matrix = CooMatrix::new(1, num_vars);
    for col in m_cols.clone() {
        eq_matrix.push(0, col, 1.0);
    }

    let tail_weight = (1.0 - lambda) / (1.0 - alpha);
    let mut bounds = vec![VarBound::Free; num_vars];
    for (b, p) in bounds[m_cols].iter_mut().zip(posterior.probs()) {
        *b = VarBound::Boxed(tail_weight * p);
    }
    Ok(StandardFormLp {
        objective,
        eq_matrix,
        eq_rhs: vec![1.0 - lambda],
        ineq_matrix,
        ineq_rhs,
        bounds,
        variable_map: vars,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroilSolution {
    pub u: OccupancyVector,
    /// Largest maximizing `σ` of the CVaR program at the solved `u`.
    pub sigma_star: f64,
    /// Soft-robust objective at the optimum, baseline constant included.
    pub objective_value: f64,
    pub expected_psi: f64,
    pub cvar_psi: f64,
    pub policy: StochasticPolicy,
    /// `ψᵢ` at the solved occupancy, in posterior order.
    pub psi: Vec<f64>,
    pub lp_iterations: usize,
}

fn require_optimal(status: LpStatus, context: &'static str) -> Result<()> {
    match status {
        LpStatus::Optimal => Ok(()),
        status => Err(Error::SolverStatus { context, status }),
    }
}

/// Solves the soft-robust LP and reports the policy with its risk profile.
///
/// `expected_psi`, `cvar_psi` and `sigma_star` are recomputed from the
/// realized `ψ` through [`crate::risk`] rather than read off the LP's
/// auxiliary variables.
pub fn solve_broil(
    mdp: &TabularMdp,
    posterior: &RewardPosterior,
    alpha: f64,
    lambda: f64,
    kind: &ObjectiveKind,
) -> Result<BroilSolution> {
    let primal_rows = mdp.num_states() + posterior.num_samples();
    let dual_rows = mdp.num_state_actions() + 1;
    let (u, lp_objective, lp_iterations) = if dual_rows < primal_rows {
        let lp = build_broil_dual_lp(mdp, posterior, alpha, lambda, kind)?;
        let sol = solve_lp(&lp)?;
        require_optimal(sol.status, "soft-robust dual LP")?;
        // prices of the state-action rows are ≤ 0; clear solver noise
        let u = sol.ineq_duals.iter().map(|d| (-d).max(0.0)).collect();
        (OccupancyVector(u), -sol.objective, sol.iterations)
    } else {
        let lp = build_broil_lp(mdp, posterior, alpha, lambda, kind)?;
        let sol = solve_lp(&lp)?;
        require_optimal(sol.status, "soft-robust LP")?;
        let u_range = lp.variable_map.range("u").expect("u block");
        (OccupancyVector(sol.x[u_range].to_vec()), sol.objective, sol.iterations)
    };
    let psi = psi_values(posterior, u.as_slice(), kind)?;
    let dist = DiscreteDistribution::new(psi.clone(), posterior.probs().to_vec())?;
    let cvar = cvar_alpha(&dist, alpha)?;
    let baseline = kind.baseline(posterior)?;
    let constant = lambda * linalg::dot(posterior.probs(), &baseline);
    let policy = extract_policy(&u, mdp)?;
    Ok(BroilSolution {
        sigma_star: cvar.sigma_star,
        objective_value: -lp_objective - constant,
        expected_psi: dist.mean(),
        cvar_psi: cvar.value,
        policy,
        psi,
        u,
        lp_iterations,
    })
}

/// One point of a λ sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub expected_psi: f64,
    pub cvar_psi: f64,
    pub sigma_star: f64,
}

/// Solves one LP per λ, in parallel; output order follows `lambdas`.
pub fn frontier_solutions(
    mdp: &TabularMdp,
    posterior: &RewardPosterior,
    alpha: f64,
    lambdas: &[f64],
    kind: &ObjectiveKind,
) -> Result<Vec<BroilSolution>> {
    lambdas
        .par_iter()
        .map(|&lambda| solve_broil(mdp, posterior, alpha, lambda, kind))
        .collect()
}

pub fn frontier(
    mdp: &TabularMdp,
    posterior: &RewardPosterior,
    alpha: f64,
    lambdas: &[f64],
    kind: &ObjectiveKind,
) -> Result<Vec<FrontierPoint>> {
    let sols = frontier_solutions(mdp, posterior, alpha, lambdas, kind)?;
    Ok(lambdas
        .iter()
        .zip(sols)
        .map(|(&lambda, s)| FrontierPoint {
            lambda,
            expected_psi: s.expected_psi,
            cvar_psi: s.cvar_psi,
            sigma_star: s.sigma_star,
        })
        .collect())
}

/// Optimal occupancy for a single known reward: `max { rᵀu | flow constraints, u ≥ 0 }`.
pub fn solve_max_return(mdp: &TabularMdp, r: &[f64]) -> Result<(OccupancyVector, f64)> {
    check_len("reward vector", mdp.num_state_actions(), r.len())?;
    let sa = mdp.num_state_actions();
    let mut vars = VariableMap::default();
    vars.push("u", sa);
    let mut eq_matrix = CooMatrix::new(mdp.num_states(), sa);
    push_flow_constraints(mdp, &mut eq_matrix);
    let lp = StandardFormLp {
        objective: r.iter().map(|x| -x).collect(),
        eq_matrix,
        eq_rhs: mdp.p0().to_vec(),
        ineq_matrix: CooMatrix::new(0, sa),
        ineq_rhs: Vec::new(),
        bounds: vec![VarBound::NonNegative; sa],
        variable_map: vars,
    };
    let sol = solve_lp(&lp)?;
    require_optimal(sol.status, "max-return LP")?;
    Ok((OccupancyVector(sol.x), -sol.objective))
}
