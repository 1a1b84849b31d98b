#![no_main]

use broil_core::environments::{build_machine_replacement, MachineReplacementSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = MachineReplacementSpec::from_json_str(text) else {
        return;
    };
    // sampling cost grows with states × samples
    if spec.num_states.saturating_mul(spec.num_posterior_samples) > 20_000 {
        return;
    }
    if let Ok((mdp, post)) = build_machine_replacement(&spec) {
        assert_eq!(post.num_samples(), spec.num_posterior_samples);
        assert_eq!(post.reward_dim(), mdp.num_state_actions());
    }
});
