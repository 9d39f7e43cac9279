#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::conformance::{builtin_matrix, score, ProtocolManifest};

fuzz_target!(|text: &str| {
    if let Ok(m) = ProtocolManifest::from_toml(text) {
        score(&m, &builtin_matrix()).expect("parsed manifests score");
    }
});
