//! Risk-sensitive policy optimization for tabular MDPs under a distribution
//! over reward functions.
//!
//! Policies are optimized through their state-action occupancy measures.
//! The soft-robust objective `λ·E[ψ] + (1 − λ)·CVaR_α[ψ]` over a finite
//! reward posterior becomes a single linear program, solved by the bundled
//! simplex solver in [`lp`]. Around that core sit Bayesian IRL posterior
//! sampling, two apprenticeship-learning baselines, and the benchmark
//! environments used to exercise them.

#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod broil;
pub mod environments;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod mdp;
pub mod posterior;
pub mod risk;

pub use error::{Error, Result};
