#![no_main]

use libfuzzer_sys::fuzz_target;
use pgrad::harness::EnvSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = EnvSpec::parse(text) {
            assert_eq!(EnvSpec::parse(&spec.to_string()).ok(), Some(spec));
        }
    }
});
