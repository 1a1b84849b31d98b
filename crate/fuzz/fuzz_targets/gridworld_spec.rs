#![no_main]

use broil_core::environments::{build_gridworld, GridworldSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = GridworldSpec::from_json_str(text) else {
        return;
    };
    if let Ok(mdp) = build_gridworld(&spec) {
        assert_eq!(mdp.num_states(), spec.num_states());
        assert!(spec.terminal() < spec.num_states());
    }
});
