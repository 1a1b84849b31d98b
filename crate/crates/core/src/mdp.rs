//! Tabular MDPs, occupancy measures and the policy/occupancy duality.
//!
//! State-action pairs are flattened action-major: `index(s, a) = a·S + s`.
//! Every vector indexed by state-action pairs in this crate (rewards,
//! occupancies, feature rows) uses that order; [`sa_index`] is the single
//! place where it is defined.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_probability_vector, Error, Result};
use crate::linalg::{self, SparseRows};

const STOCHASTIC_TOL: f64 = 1e-9;

/// Occupancy below this is treated as "unreachable" by [`extract_policy`].
pub const UNREACHABLE_MASS: f64 = 1e-10;

/// Value iteration stops once the max-norm Bellman residual is below this.
pub const VALUE_ITERATION_TOL: f64 = 1e-10;

#[inline]
pub fn sa_index(num_states: usize, s: usize, a: usize) -> usize {
    a * num_states + s
}

/// A finite MDP without a fixed reward: dynamics, discount, start
/// distribution and a linear reward-feature matrix `Φ` of shape `(S·A) × k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    p0: Vec<f64>,
    /// Row `sa_index(s, a)` holds `P(· | s, a)`.
    transitions: SparseRows,
    features: SparseRows,
}

impl TabularMdp {
    /// `transitions[a][s]` is the successor distribution of `(s, a)`;
    /// `features[sa_index(s, a)]` is `φ(s, a)`.
    pub fn new(
        gamma: f64,
        p0: Vec<f64>,
        transitions: &[Vec<Vec<f64>>],
        features: &[Vec<f64>],
    ) -> Result<Self> {
        let num_states = p0.len();
        let num_actions = transitions.len();
        if num_states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        if num_actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        let mut rows = SparseRows::new(num_states);
        for (a, pa) in transitions.iter().enumerate() {
            if pa.len() != num_states {
                return Err(Error::InvalidMdp(format!(
                    "transition matrix for action {a} has {} rows, expected {num_states}",
                    pa.len()
                )));
            }
        }
        // action-major: all states of action 0, then action 1, ...
        for (a, pa) in transitions.iter().enumerate() {
            for (s, row) in pa.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::InvalidMdp(format!(
                        "row ({s}, {a}) has {} entries, expected {num_states}",
                        row.len()
                    )));
                }
                rows.push_row(row.iter().copied().enumerate());
            }
        }
        let k = features.first().map_or(0, Vec::len);
        if features.len() != num_states * num_actions {
            return Err(Error::InvalidMdp(format!(
                "feature matrix has {} rows, expected {}",
                features.len(),
                num_states * num_actions
            )));
        }
        if features.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidMdp("ragged feature matrix".into()));
        }
        let features = SparseRows::from_dense_rows(k, features);
        Self::from_parts(gamma, p0, num_actions, rows, features)
    }

    /// Builds an MDP from already-compressed rows (rows in `sa_index` order).
    pub fn from_parts(
        gamma: f64,
        p0: Vec<f64>,
        num_actions: usize,
        transitions: SparseRows,
        features: SparseRows,
    ) -> Result<Self> {
        let num_states = p0.len();
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp("empty state or action set".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("discount {gamma} not in [0, 1)")));
        }
        check_probability_vector("initial distribution", &p0)?;
        let n_sa = num_states * num_actions;
        if transitions.nrows() != n_sa || transitions.ncols() != num_states {
            return Err(Error::InvalidMdp("transition shape mismatch".into()));
        }
        if features.nrows() != n_sa {
            return Err(Error::InvalidMdp("feature shape mismatch".into()));
        }
        for i in 0..n_sa {
            let mut total = 0.0;
            for (_, p) in transitions.row(i) {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidMdp(format!(
                        "transition row {i} has invalid probability {p}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidMdp(format!(
                    "transition row {i} sums to {total}"
                )));
            }
            if features.row(i).any(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidMdp(format!("feature row {i} is not finite")));
            }
        }
        Ok(TabularMdp {
            num_states,
            num_actions,
            gamma,
            p0,
            transitions,
            features,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_state_actions(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn sa(&self, s: usize, a: usize) -> usize {
        sa_index(self.num_states, s, a)
    }

    /// Successor distribution of `(s, a)` as `(next_state, probability)`.
    pub fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.transitions.row(self.sa(s, a))
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.successors(s, a)
            .filter(|(n, _)| *n == next)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn features(&self) -> &SparseRows {
        &self.features
    }

    pub fn feature_row(&self, s: usize, a: usize) -> Vec<f64> {
        self.features.dense_row(self.sa(s, a))
    }

    /// `r = Φ w`
    pub fn reward_from_weights(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len("reward weights", self.num_features(), w.len())?;
        Ok(self.features.mul_vec(w))
    }

    /// Replaces the start distribution, keeping everything else.
    pub fn with_p0(mut self, p0: Vec<f64>) -> Result<Self> {
        check_len("initial distribution", self.num_states, p0.len())?;
        check_probability_vector("initial distribution", &p0)?;
        self.p0 = p0;
        Ok(self)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// On-disk MDP layout. `transitions[a]` is a row-major `S × S` matrix and
/// `features` is the row-major `(S·A) × k` matrix in `sa_index` row order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    p0: Vec<f64>,
    transitions: Vec<Vec<Vec<f64>>>,
    features: Vec<Vec<f64>>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: MdpFile) -> Result<Self> {
        if f.p0.len() != f.num_states {
            return Err(Error::InvalidMdp(format!(
                "num_states = {} but p0 has {} entries",
                f.num_states,
                f.p0.len()
            )));
        }
        if f.transitions.len() != f.num_actions {
            return Err(Error::InvalidMdp(format!(
                "num_actions = {} but {} transition matrices given",
                f.num_actions,
                f.transitions.len()
            )));
        }
        TabularMdp::new(f.gamma, f.p0, &f.transitions, &f.features)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let s = m.num_states;
        let transitions = (0..m.num_actions)
            .map(|a| {
                (0..s)
                    .map(|st| m.transitions.dense_row(sa_index(s, st, a)))
                    .collect()
            })
            .collect();
        MdpFile {
            num_states: s,
            num_actions: m.num_actions,
            gamma: m.gamma,
            p0: m.p0.clone(),
            transitions,
            features: m.features.to_dense_rows(),
        }
    }
}

/// Row-stochastic `S × A` action distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    num_states: usize,
    num_actions: usize,
    /// Row-major `S × A`.
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_len("policy entries", num_states * num_actions, probs.len())?;
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Empty("policy"));
        }
        for s in 0..num_states {
            check_probability_vector(
                "policy row",
                &probs[s * num_actions..(s + 1) * num_actions],
            )?;
        }
        Ok(StochasticPolicy {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != a) {
            return Err(Error::InvalidProbabilities("ragged policy rows".into()));
        }
        Self::new(rows.len(), a, rows.concat())
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        StochasticPolicy {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::IndexOutOfRange(format!("action {a} in state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Self::new(actions.len(), num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_states).map(|s| self.row(s).to_vec()).collect()
    }

    /// Lowest-index action with maximal probability.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, p) in row.iter().enumerate() {
            if *p > row[best] {
                best = a;
            }
        }
        best
    }
}

/// Discounted state-action visitation mass, laid out by [`sa_index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupancyVector(pub Vec<f64>);

impl OccupancyVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Discounted visitation of each state, `d(s) = Σ_a u(s, a)`.
    pub fn state_occupancy(&self, mdp: &TabularMdp) -> Vec<f64> {
        let s_n = mdp.num_states();
        (0..s_n)
            .map(|s| (0..mdp.num_actions()).map(|a| self.0[mdp.sa(s, a)]).sum())
            .collect()
    }

    /// Per-state residual of `Σ_a (I − γ P_aᵀ) u^a − p₀`.
    pub fn flow_residual(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        check_len("occupancy", mdp.num_state_actions(), self.len())?;
        let mut res: Vec<f64> = mdp.p0().iter().map(|p| -p).collect();
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let u = self.0[mdp.sa(s, a)];
                if u == 0.0 {
                    continue;
                }
                res[s] += u;
                for (next, p) in mdp.successors(s, a) {
                    res[next] -= mdp.gamma() * p * u;
                }
            }
        }
        Ok(res)
    }
}

/// An ordered `(state, action)` trajectory; step `t` carries weight `γ^t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub steps: Vec<(usize, usize)>,
}

impl Demonstration {
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("demonstration"));
        }
        Ok(Demonstration { steps })
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Empty("demonstration"));
        }
        for &(s, a) in &self.steps {
            if s >= mdp.num_states() || a >= mdp.num_actions() {
                return Err(Error::IndexOutOfRange(format!(
                    "demonstration step ({s}, {a})"
                )));
            }
        }
        Ok(())
    }
}

/// Q-values laid out by [`sa_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct QValues {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QValues {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[sa_index(self.num_states, s, a)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn state_value(&self, s: usize) -> f64 {
        (0..self.num_actions)
            .map(|a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Deterministic greedy policy, ties to the lowest action index.
    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| {
                let mut best = 0;
                for a in 1..self.num_actions {
                    if self.get(s, a) > self.get(s, best) {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }
}

/// Occupancy measure of a stationary policy.
///
/// Solves `(I − γ P_πᵀ) d = p₀` for the state occupancy and splits it by
/// action probabilities: `u(s, a) = π(a|s) d(s)`.
pub fn occupancy_from_policy(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
) -> Result<OccupancyVector> {
    check_len("policy states", mdp.num_states(), policy.num_states())?;
    check_len("policy actions", mdp.num_actions(), policy.num_actions())?;
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    // row s' of (I - γ P_πᵀ): coefficient of d(s) is δ(s, s') - γ P_π(s, s')
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for s in 0..n {
        for act in 0..mdp.num_actions() {
            let pi = policy.prob(s, act);
            if pi == 0.0 {
                continue;
            }
            for (next, p) in mdp.successors(s, act) {
                a[next * n + s] -= gamma * pi * p;
            }
        }
    }
    let d = linalg::solve_dense(a, n, mdp.p0().to_vec())
        .ok_or(Error::Singular("computing policy occupancy"))?;
    let mut u = vec![0.0; mdp.num_state_actions()];
    for s in 0..n {
        for act in 0..mdp.num_actions() {
            u[mdp.sa(s, act)] = policy.prob(s, act) * d[s];
        }
    }
    Ok(OccupancyVector(u))
}

/// Normalizes occupancies state by state. States with total occupancy below
/// [`UNREACHABLE_MASS`] get the uniform action distribution. Small negative
/// entries left by an LP solve are clamped to zero first.
pub fn extract_policy(u: &OccupancyVector, mdp: &TabularMdp) -> Result<StochasticPolicy> {
    check_len("occupancy", mdp.num_state_actions(), u.len())?;
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let mut probs = vec![0.0; s_n * a_n];
    for s in 0..s_n {
        let row: Vec<f64> = (0..a_n).map(|a| u.0[mdp.sa(s, a)].max(0.0)).collect();
        let total: f64 = row.iter().sum();
        for a in 0..a_n {
            probs[s * a_n + a] = if total < UNREACHABLE_MASS {
                1.0 / a_n as f64
            } else {
                row[a] / total
            };
        }
    }
    StochasticPolicy::new(s_n, a_n, probs)
}

/// `ρ(π, r) = uᵀ r`
pub fn expected_return(u: &OccupancyVector, r: &[f64]) -> Result<f64> {
    check_len("reward vector", u.len(), r.len())?;
    Ok(linalg::dot(u.as_slice(), r))
}

/// `μ = Φᵀ u`
pub fn feature_counts(u: &OccupancyVector, mdp: &TabularMdp) -> Result<Vec<f64>> {
    check_len("occupancy", mdp.num_state_actions(), u.len())?;
    Ok(mdp.features().t_mul_vec(u.as_slice()))
}

/// Discounted feature counts averaged over trajectories; the discount
/// exponent restarts at zero for each trajectory.
pub fn empirical_expert_feature_counts(
    demos: &[Demonstration],
    mdp: &TabularMdp,
) -> Result<Vec<f64>> {
    if demos.is_empty() {
        return Err(Error::Empty("demonstration set"));
    }
    let mut mu = vec![0.0; mdp.num_features()];
    for demo in demos {
        demo.validate(mdp)?;
        let mut discount = 1.0;
        for &(s, a) in &demo.steps {
            for (f, v) in mdp.features().row(mdp.sa(s, a)) {
                mu[f] += discount * v;
            }
            discount *= mdp.gamma();
        }
    }
    let m = demos.len() as f64;
    mu.iter_mut().for_each(|x| *x /= m);
    Ok(mu)
}

/// Discounted state-action visit counts of the demonstrations, averaged over
/// trajectories. Plays the role of the demonstrator's occupancy vector.
pub fn empirical_occupancy(demos: &[Demonstration], mdp: &TabularMdp) -> Result<OccupancyVector> {
    if demos.is_empty() {
        return Err(Error::Empty("demonstration set"));
    }
    let mut u = vec![0.0; mdp.num_state_actions()];
    for demo in demos {
        demo.validate(mdp)?;
        let mut discount = 1.0;
        for &(s, a) in &demo.steps {
            u[mdp.sa(s, a)] += discount;
            discount *= mdp.gamma();
        }
    }
    let m = demos.len() as f64;
    u.iter_mut().for_each(|x| *x /= m);
    Ok(OccupancyVector(u))
}

/// Optimal Q-values for a state-action reward by value iteration,
/// `Q(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) max_b Q(s',b)`, iterated until the
/// max-norm change drops below [`VALUE_ITERATION_TOL`].
pub fn q_values(mdp: &TabularMdp, r: &[f64]) -> Result<QValues> {
    check_len("reward vector", mdp.num_state_actions(), r.len())?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "reward",
            reason: "non-finite entry".into(),
        });
    }
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let mut q = r.to_vec();
    let mut v = vec![0.0; s_n];
    loop {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = (0..a_n)
                .map(|a| q[sa_index(s_n, s, a)])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let mut delta: f64 = 0.0;
        for s in 0..s_n {
            for a in 0..a_n {
                let i = sa_index(s_n, s, a);
                let next: f64 = mdp.successors(s, a).map(|(n, p)| p * v[n]).sum();
                let updated = r[i] + gamma * next;
                delta = delta.max((updated - q[i]).abs());
                q[i] = updated;
            }
        }
        if delta < VALUE_ITERATION_TOL {
            break;
        }
    }
    Ok(QValues {
        num_states: s_n,
        num_actions: a_n,
        values: q,
    })
}
