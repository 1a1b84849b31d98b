#![no_main]

use broil_core::posterior::RewardPosterior;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(post) = RewardPosterior::from_json_str(text) {
        let json = post.to_json_string().unwrap();
        let again = RewardPosterior::from_json_str(&json).unwrap();
        assert_eq!(json, again.to_json_string().unwrap());
        let _ = post.mean_reward();
    }
});
