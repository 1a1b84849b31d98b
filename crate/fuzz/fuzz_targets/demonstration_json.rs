#![no_main]

use broil_core::environments::{build_gridworld, GridworldSpec};
use broil_core::mdp::{empirical_expert_feature_counts, Demonstration};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(demo) = serde_json::from_slice::<Demonstration>(data) else {
        return;
    };
    let mdp = build_gridworld(&GridworldSpec::reference()).unwrap();
    if demo.validate(&mdp).is_ok() {
        let mu = empirical_expert_feature_counts(&[demo], &mdp).unwrap();
        assert!(mu.iter().all(|x| x.is_finite() && *x >= 0.0));
    }
});
