//! Grid CSV decoding takes arbitrary bytes from disk; it must reject
//! malformed input with an error, never a panic. A table that does parse
//! must also survive gap inspection and repair.

#![no_main]

use gridcast_core::dataset::{gap_report, read_grid_csv, repair_gaps};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_grid_csv(data, "FUZZ") {
        let _ = gap_report(&table);
        let _ = repair_gaps(&table, 3);
    }
});
