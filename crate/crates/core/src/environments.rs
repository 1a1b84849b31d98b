//! Benchmark problems: a machine-replacement chain with uncertain costs and
//! a two-feature gridworld with an absorbing exit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseRows;
use crate::mdp::{sa_index, Demonstration, TabularMdp};
use crate::posterior::{sample_prior_posterior, EntryPrior, PriorSpec, RewardPosterior};

pub const DO_NOTHING: usize = 0;
pub const REPLACE: usize = 1;

/// Distribution of a nonnegative cost. Rewards are the negated draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostDistribution {
    Constant { value: f64 },
    Normal { mean: f64, std: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl CostDistribution {
    fn as_reward_prior(&self) -> EntryPrior {
        match *self {
            CostDistribution::Constant { value } => EntryPrior::Constant { value: -value },
            CostDistribution::Normal { mean, std } => EntryPrior::Normal { mean: -mean, std },
            CostDistribution::Gamma { shape, scale } => EntryPrior::NegatedGamma { shape, scale },
        }
    }

    pub fn mean(&self) -> f64 {
        -self.as_reward_prior().mean()
    }
}

/// An aging machine. Doing nothing advances the age by one (the oldest state
/// stays put); replacing resets it to the first state. The initial state is
/// uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineReplacementSpec {
    pub num_states: usize,
    pub gamma: f64,
    /// Cost of replacing, per state.
    pub repair_cost: Vec<CostDistribution>,
    /// Cost of doing nothing, per state.
    pub nothing_cost: Vec<CostDistribution>,
    pub seed: u64,
    pub num_posterior_samples: usize,
}

impl MachineReplacementSpec {
    /// Chain of `num_states` states whose do-nothing cost tails fatten with
    /// age. The age profile is rescaled to a four-state chain, so longer
    /// chains spread the same cost range over more states.
    pub fn parametric(num_states: usize, num_posterior_samples: usize, seed: u64) -> Self {
        let age = |s: usize| 4.0 * (s + 1) as f64 / num_states.max(1) as f64;
        MachineReplacementSpec {
            num_states,
            gamma: 0.95,
            repair_cost: vec![CostDistribution::Normal { mean: 130.0, std: 20.0 }; num_states],
            nothing_cost: (0..num_states)
                .map(|s| CostDistribution::Gamma {
                    shape: 0.2 * age(s) * age(s),
                    scale: 50.0 * age(s),
                })
                .collect(),
            seed,
            num_posterior_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: String| Err(Error::InvalidParameter { name, reason });
        if self.num_states < 2 {
            return bad("num_states", format!("{} < 2", self.num_states));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("{} not in [0, 1)", self.gamma));
        }
        if self.repair_cost.len() != self.num_states || self.nothing_cost.len() != self.num_states {
            return bad("repair_cost/nothing_cost", "need one entry per state".into());
        }
        if self.num_posterior_samples == 0 {
            return bad("num_posterior_samples", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// The MDP (identity features over state-action pairs) and a prior-sampled
/// reward posterior.
pub fn build_machine_replacement(spec: &MachineReplacementSpec) -> Result<(TabularMdp, RewardPosterior)> {
    spec.validate()?;
    let n = spec.num_states;
    let mut transitions = SparseRows::new(n);
    for a in [DO_NOTHING, REPLACE] {
        for s in 0..n {
            let next = if a == REPLACE { 0 } else { (s + 1).min(n - 1) };
            debug_assert_eq!(transitions.nrows(), sa_index(n, s, a));
            transitions.push_row([(next, 1.0)]);
        }
    }
    let mut features = SparseRows::new(2 * n);
    for i in 0..2 * n {
        features.push_row([(i, 1.0)]);
    }
    let mdp = TabularMdp::from_parts(spec.gamma, vec![1.0 / n as f64; n], 2, transitions, features)?;
    let mut entries = Vec::with_capacity(2 * n);
    entries.extend(spec.nothing_cost.iter().map(|c| c.as_reward_prior()));
    entries.extend(spec.repair_cost.iter().map(|c| c.as_reward_prior()));
    let posterior = sample_prior_posterior(
        &PriorSpec { entries },
        &mdp,
        spec.num_posterior_samples,
        spec.seed,
    )?;
    Ok((mdp, posterior))
}

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

pub const WHITE_FEATURE: usize = 0;
pub const RED_FEATURE: usize = 1;

/// What a grid cell is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    White,
    Red,
    Terminal,
}

/// Rectangular grid with deterministic four-way moves. `layout` holds one
/// string per row, top row first: `W` white, `R` red, `T` the absorbing
/// terminal (exactly one). Moves off the grid leave the agent in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
    pub layout: Vec<String>,
}

impl GridworldSpec {
    /// Four by three grid. The demonstration corridor runs down the left
    /// column and along the bottom row; a red band separates it from the
    /// top-right region, whose shortest route to the exit crosses red.
    pub fn reference() -> Self {
        GridworldSpec {
            width: 4,
            height: 3,
            gamma: 0.95,
            layout: vec!["WWWW".into(), "WRRR".into(), "WWWT".into()],
        }
    }

    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, s: usize) -> (usize, usize) {
        (s / self.width, s % self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParameter { name: "gridworld", reason });
        if self.width == 0 || self.height == 0 {
            return bad("empty grid".into());
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} not in [0, 1)", self.gamma));
        }
        if self.layout.len() != self.height {
            return bad(format!("{} layout rows for height {}", self.layout.len(), self.height));
        }
        let mut terminals = 0;
        for row in &self.layout {
            if row.chars().count() != self.width {
                return bad(format!("row {row:?} is not {} cells wide", self.width));
            }
            for c in row.chars() {
                match c {
                    'W' | 'R' => {}
                    'T' => terminals += 1,
                    other => return bad(format!("unknown cell label {other:?}")),
                }
            }
        }
        if terminals != 1 {
            return bad(format!("{terminals} terminal cells, expected 1"));
        }
        Ok(())
    }

    pub fn cell(&self, s: usize) -> Cell {
        let (r, c) = self.coords(s);
        match self.layout[r].as_bytes()[c] {
            b'R' => Cell::Red,
            b'T' => Cell::Terminal,
            _ => Cell::White,
        }
    }

    pub fn terminal(&self) -> usize {
        (0..self.num_states())
            .find(|&s| self.cell(s) == Cell::Terminal)
            .expect("validated layout has a terminal")
    }

    /// Deterministic successor, ignoring the terminal's absorption.
    pub fn step(&self, s: usize, a: usize) -> usize {
        let (r, c) = self.coords(s);
        let (r, c) = match a {
            UP => (r.saturating_sub(1), c),
            DOWN => ((r + 1).min(self.height - 1), c),
            LEFT => (r, c.saturating_sub(1)),
            _ => (r, (c + 1).min(self.width - 1)),
        };
        self.state(r, c)
    }

    pub fn red_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| self.cell(s) == Cell::Red).collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Gridworld MDP with features `[white, red]`, identical across actions and
/// zero at the terminal. The initial distribution is uniform over
/// non-terminal cells (over the lone cell of a one-cell grid).
pub fn build_gridworld(spec: &GridworldSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.num_states();
    let terminal = spec.terminal();
    let mut transitions = SparseRows::new(n);
    let mut features = SparseRows::new(2);
    for a in 0..4 {
        for s in 0..n {
            let next = if s == terminal { s } else { spec.step(s, a) };
            transitions.push_row([(next, 1.0)]);
            match spec.cell(s) {
                Cell::White => features.push_row([(WHITE_FEATURE, 1.0)]),
                Cell::Red => features.push_row([(RED_FEATURE, 1.0)]),
                Cell::Terminal => features.push_row([]),
            }
        }
    }
    let p0 = if n == 1 {
        vec![1.0]
    } else {
        let m = (n - 1) as f64;
        (0..n).map(|s| if s == terminal { 0.0 } else { 1.0 / m }).collect()
    };
    TabularMdp::from_parts(spec.gamma, p0, 4, transitions, features)
}

/// The single demonstration on the default grid: from the top-left corner
/// down the left column and along the bottom row into the exit.
pub fn reference_demo(spec: &GridworldSpec) -> Result<Demonstration> {
    if *spec != GridworldSpec::reference() {
        return Err(Error::SpecMismatch(
            "the reference demonstration is defined for the default grid only".into(),
        ));
    }
    let mut s = spec.state(0, 0);
    let mut steps = Vec::new();
    for a in [DOWN, DOWN, RIGHT, RIGHT, RIGHT] {
        steps.push((s, a));
        s = spec.step(s, a);
    }
    Demonstration::new(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broil::{solve_broil, ObjectiveKind};
    use crate::mdp::empirical_expert_feature_counts;

    #[test]
    fn machine_replacement_topology() {
        let spec = MachineReplacementSpec::parametric(4, 10, 0);
        let (mdp, post) = build_machine_replacement(&spec).unwrap();
        assert_eq!((mdp.num_states(), mdp.num_actions()), (4, 2));
        for s in 0..4 {
            assert_eq!(mdp.transition_prob(s, REPLACE, 0), 1.0);
            assert_eq!(mdp.transition_prob(s, DO_NOTHING, (s + 1).min(3)), 1.0);
        }
        assert_eq!(mdp.p0(), &[0.25; 4]);
        assert_eq!(post.num_samples(), 10);
        // all rewards are negated nonnegative costs, except for normal noise
        assert!(post.rewards().iter().all(|r| r[..4].iter().all(|x| *x <= 0.0)));
    }

    #[test]
    fn zero_costs_give_zero_objective() {
        let mut spec = MachineReplacementSpec::parametric(4, 5, 0);
        spec.repair_cost = vec![CostDistribution::Constant { value: 0.0 }; 4];
        spec.nothing_cost = vec![CostDistribution::Constant { value: 0.0 }; 4];
        let (mdp, post) = build_machine_replacement(&spec).unwrap();
        let sol = solve_broil(&mdp, &post, 0.9, 0.5, &ObjectiveKind::Robust).unwrap();
        assert!(sol.objective_value.abs() < 1e-12);
        assert!((sol.u.total_mass() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_machine_specs() {
        let mut spec = MachineReplacementSpec::parametric(4, 5, 0);
        spec.num_states = 1;
        assert!(build_machine_replacement(&spec).is_err());
        let mut spec = MachineReplacementSpec::parametric(4, 5, 0);
        spec.nothing_cost[2] = CostDistribution::Gamma { shape: -1.0, scale: 2.0 };
        assert!(build_machine_replacement(&spec).is_err());
        let mut spec = MachineReplacementSpec::parametric(4, 5, 0);
        spec.repair_cost.pop();
        assert!(build_machine_replacement(&spec).is_err());
    }

    #[test]
    fn one_cell_grid() {
        let spec = GridworldSpec {
            width: 1,
            height: 1,
            gamma: 0.95,
            layout: vec!["T".into()],
        };
        let mdp = build_gridworld(&spec).unwrap();
        for a in 0..4 {
            assert_eq!(mdp.transition_prob(0, a, 0), 1.0);
            assert_eq!(mdp.feature_row(0, a), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn two_cell_grid_reaches_exit() {
        let spec = GridworldSpec {
            width: 2,
            height: 1,
            gamma: 0.9,
            layout: vec!["WT".into()],
        };
        let mdp = build_gridworld(&spec).unwrap();
        assert_eq!(mdp.transition_prob(0, RIGHT, 1), 1.0);
        assert_eq!(mdp.transition_prob(0, LEFT, 0), 1.0);
        assert_eq!(mdp.p0(), &[1.0, 0.0]);
    }

    #[test]
    fn default_grid_dynamics() {
        let spec = GridworldSpec::reference();
        let mdp = build_gridworld(&spec).unwrap();
        let n = spec.num_states();
        for s in 0..spec.width {
            assert_eq!(mdp.transition_prob(s, UP, s), 1.0);
        }
        for a in 0..4 {
            for s in 0..n {
                let row: Vec<f64> = (0..n).map(|t| mdp.transition_prob(s, a, t)).collect();
                assert!(row.iter().all(|p| *p == 0.0 || *p == 1.0));
                assert_eq!(row.iter().sum::<f64>(), 1.0);
            }
        }
        let t = spec.terminal();
        assert_eq!(t, n - 1);
        assert_eq!(mdp.p0()[t], 0.0);
        assert_eq!(spec.red_states(), vec![5, 6, 7]);
    }

    #[test]
    fn default_demo_stays_on_white() {
        let spec = GridworldSpec::reference();
        let mdp = build_gridworld(&spec).unwrap();
        let demo = reference_demo(&spec).unwrap();
        demo.validate(&mdp).unwrap();
        assert!(demo.steps.iter().all(|&(s, _)| spec.cell(s) == Cell::White));
        let &(last_s, last_a) = demo.steps.last().unwrap();
        assert_eq!(spec.step(last_s, last_a), spec.terminal());
        let mu = empirical_expert_feature_counts(&[demo], &mdp).unwrap();
        assert_eq!(mu[RED_FEATURE], 0.0);
        let white: f64 = (0..5).map(|t| 0.95f64.powi(t)).sum();
        assert!((mu[WHITE_FEATURE] - white).abs() < 1e-12);
    }

    #[test]
    fn demo_requires_default_grid() {
        let mut spec = GridworldSpec::reference();
        spec.gamma = 0.9;
        assert!(matches!(reference_demo(&spec), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn invalid_grids() {
        let mut spec = GridworldSpec::reference();
        spec.layout[0] = "WWWT".into();
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridworldSpec::reference();
        spec.layout[1] = "WRX RR".into();
        assert!(build_gridworld(&spec).is_err());
        let mut spec = GridworldSpec::reference();
        spec.height = 4;
        assert!(build_gridworld(&spec).is_err());
    }

    #[test]
    fn specs_round_trip_through_json() {
        let g = GridworldSpec::reference();
        let back = GridworldSpec::from_json_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        let m = MachineReplacementSpec::parametric(4, 2000, 0);
        let back = MachineReplacementSpec::from_json_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
