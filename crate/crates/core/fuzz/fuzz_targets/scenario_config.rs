#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::scenario::ScenarioConfig;

fuzz_target!(|text: &str| {
    let _ = ScenarioConfig::from_toml(text);
});
