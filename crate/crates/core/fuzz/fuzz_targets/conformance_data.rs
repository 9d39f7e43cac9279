#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::conformance::ConformanceData;

fuzz_target!(|text: &str| {
    let _ = ConformanceData::from_toml(text);
});
