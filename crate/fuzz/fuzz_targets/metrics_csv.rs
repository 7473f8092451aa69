#![no_main]
use libfuzzer_sys::fuzz_target;
use mlrpca_core::io::{metrics_from_csv, metrics_to_csv};

fuzz_target!(|text: &str| {
    if let Ok(rows) = metrics_from_csv(text) {
        let again = metrics_from_csv(&metrics_to_csv(&rows)).expect("written metrics parse");
        assert_eq!(again.len(), rows.len());
    }
});
