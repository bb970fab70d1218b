#![no_main]

use libfuzzer_sys::fuzz_target;
use pgrad::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = ExperimentConfig::parse(text) {
            let _ = config.validate();
        }
    }
});
