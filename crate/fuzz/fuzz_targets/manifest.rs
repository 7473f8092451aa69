#![no_main]
use libfuzzer_sys::fuzz_target;
use mlrpca_cli::{Manifest, RunConfig};

fuzz_target!(|text: &str| {
    if let Ok(m) = Manifest::parse(text) {
        if let Ok(cfg) = RunConfig::from_manifest(&m) {
            let _ = Manifest::parse(&cfg.to_manifest().to_string()).expect("written manifest parses");
        }
    }
});
