#![no_main]
use libfuzzer_sys::fuzz_target;
use mlrpca_core::io::{decode_lrml, encode_lrml};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_lrml(data) {
        let again = decode_lrml(&encode_lrml(&m)).expect("re-encoded matrix decodes");
        assert_eq!(again.shape(), m.shape());
        assert!(again
            .as_slice()
            .iter()
            .zip(m.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
