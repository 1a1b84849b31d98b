//! Value at risk and conditional value at risk of discrete distributions.
//!
//! **Convention:** `alpha` is the risk-aversion level and the tail is taken on
//! the *low* side. `VaR_α` is the `(1 − α)`-quantile worst-case outcome and
//! `CVaR_α` averages the worst `(1 − α)` probability mass. `α = 0` gives the
//! mean; `α → 1` approaches the minimum. This is the opposite of the loss-based
//! convention common in finance, where large values are bad.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability_vector, Error, Result};

/// Slack used when comparing accumulated probability mass against `α`.
const MASS_TOL: f64 = 1e-12;

/// A finite distribution: `values[i]` occurs with probability `probs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        if values.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                context: "distribution probabilities",
                expected: values.len(),
                actual: probs.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: "non-finite outcome".into(),
            });
        }
        check_probability_vector("distribution probabilities", &probs)?;
        Ok(DiscreteDistribution { values, probs })
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Empty("distribution"));
        }
        Self::new(values, vec![1.0 / n as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices sorted ascending by value; ties keep original order.
    fn ascending(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&i, &j| self.values[i].total_cmp(&self.values[j]).then(i.cmp(&j)));
        idx
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("{alpha} not in [0, 1)"),
        })
    }
}

/// `VaR_α[X] = sup { x : Pr(X ≥ x) ≥ α }`, searched over attained values.
pub fn var_alpha(dist: &DiscreteDistribution, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mut order = dist.ascending();
    order.reverse();
    let mut mass = 0.0;
    let mut i = 0;
    while i < order.len() {
        let x = dist.values[order[i]];
        // Pr(X ≥ x) includes every tie of x
        while i < order.len() && dist.values[order[i]] == x {
            mass += dist.probs[order[i]];
            i += 1;
        }
        if mass >= alpha - MASS_TOL {
            return Ok(x);
        }
    }
    Ok(dist.min())
}

/// Result of [`cvar_alpha`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cvar {
    pub value: f64,
    /// Maximizing `σ`; the largest maximizer among attained values.
    pub sigma_star: f64,
}

/// `CVaR_α[X] = max_σ ( σ − E[(σ − X)₊] / (1 − α) )`.
///
/// The objective is concave and piecewise linear with kinks at the attained
/// values, so it is evaluated exactly at each distinct value using prefix
/// sums over the ascending order.
pub fn cvar_alpha(dist: &DiscreteDistribution, alpha: f64) -> Result<Cvar> {
    check_alpha(alpha)?;
    let order = dist.ascending();
    let tail = 1.0 - alpha;
    // mass and first moment strictly below the current candidate
    let (mut mass_below, mut moment_below) = (0.0, 0.0);
    let mut candidates = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let sigma = dist.values[order[i]];
        let objective = sigma - (sigma * mass_below - moment_below) / tail;
        candidates.push((sigma, objective));
        while i < order.len() && dist.values[order[i]] == sigma {
            mass_below += dist.probs[order[i]];
            moment_below += dist.probs[order[i]] * dist.values[order[i]];
            i += 1;
        }
    }
    let best = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + best.abs());
    let sigma_star = candidates
        .iter()
        .rev()
        .find(|c| c.1 >= best - tol)
        .map(|c| c.0)
        .expect("nonempty distribution");
    Ok(Cvar {
        value: best,
        sigma_star,
    })
}

/// `λ·E[X] + (1 − λ)·CVaR_α[X]`
pub fn soft_robust_value(dist: &DiscreteDistribution, alpha: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: format!("{lambda} not in [0, 1]"),
        });
    }
    let cvar = cvar_alpha(dist, alpha)?;
    Ok(lambda * dist.mean() + (1.0 - lambda) * cvar.value)
}
