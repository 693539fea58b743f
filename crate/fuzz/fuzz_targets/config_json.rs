//! Experiment configuration is user-supplied JSON; parsing must never
//! panic, and an accepted config must serialize back out.

#![no_main]

use gridcast_core::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_json_str(text) {
        let _ = config.to_json_string();
    }
});
