#![no_main]

use libfuzzer_sys::fuzz_target;
use pgrad::harness::{format_mdp, parse_mdp};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mdp) = parse_mdp(text) {
        // anything accepted must survive a round trip unchanged
        let again = parse_mdp(&format_mdp(&mdp)).expect("formatted MDP failed to parse");
        assert_eq!(again, mdp);
    }
});
