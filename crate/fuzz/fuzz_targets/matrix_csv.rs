#![no_main]
use libfuzzer_sys::fuzz_target;
use mlrpca_core::io::{matrix_from_csv, matrix_to_csv};

fuzz_target!(|text: &str| {
    if let Ok(m) = matrix_from_csv(text) {
        let again = matrix_from_csv(&matrix_to_csv(&m)).expect("written CSV parses");
        assert_eq!(again.shape(), m.shape());
        assert!(again
            .as_slice()
            .iter()
            .zip(m.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())));
    }
});
