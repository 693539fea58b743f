//! Horizon model bundles (24 hour ensembles) are parsed from disk; a
//! hostile file must be rejected or round-trip back to JSON cleanly.

#![no_main]

use gridcast_core::pipeline::HorizonModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = HorizonModel::from_json_str(text) {
        let _ = model.to_json_string();
    }
});
