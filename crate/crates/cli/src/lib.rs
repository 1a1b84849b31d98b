//! Experiment runner: builds environments and posteriors from JSON configs
//! and writes frontiers, sorted return distributions, policies and timings
//! as CSV/JSON.

pub mod commands;
pub mod config;

pub use commands::{run_bench, run_birl, run_frontier, run_returns, run_solve, BenchConfig};
pub use config::{Algorithm, EnvironmentConfig, Experiment, ExperimentConfig, Measure, InvalidConfig};

/// Exit code for an error: 2 for invalid configuration or parameters, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use broil_core::Error;
    if err.downcast_ref::<InvalidConfig>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidParameter { .. }
            | Error::InvalidMdp(_)
            | Error::InvalidProbabilities(_)
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange(_)
            | Error::SpecMismatch(_)
            | Error::Empty(_),
        ) => 2,
        _ => 1,
    }
}
