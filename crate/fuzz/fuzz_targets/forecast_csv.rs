//! Forecast CSV files are read back for scoring; arbitrary bytes must
//! produce an error, not a panic, and whatever parses must re-serialize.

#![no_main]

use gridcast_core::pipeline::{read_forecast_csv, write_forecast_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(forecasts) = read_forecast_csv(data) {
        let mut out = Vec::new();
        let _ = write_forecast_csv(&forecasts, &mut out);
    }
});
