//! Persisted sublearner models are parsed from disk; a hostile file must
//! be rejected or, if it validates, predict without panicking.

#![no_main]

use std::collections::BTreeMap;

use gridcast_core::features::FeatureMatrix;
use gridcast_core::sublearners::TrainedSublearner;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(model) = TrainedSublearner::from_json_str(text) else {
        return;
    };
    let names = model.feature_columns().to_vec();
    let group_of: BTreeMap<String, String> = names
        .iter()
        .map(|n| (n.clone(), String::from("all")))
        .collect();
    let rows = ndarray::Array2::zeros((2, names.len()));
    let x = FeatureMatrix::new(names, group_of, rows).expect("zero matrix is well formed");
    let _ = model.predict(&x);
    let _ = model.to_json_string();
});
