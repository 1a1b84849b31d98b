#![no_main]

use broil_core::mdp::TabularMdp;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(mdp) = TabularMdp::from_json_str(text) else {
        return;
    };
    // anything accepted must survive a round trip unchanged
    let again = TabularMdp::from_json_str(&mdp.to_json_string().unwrap()).unwrap();
    assert_eq!(mdp, again);
});
