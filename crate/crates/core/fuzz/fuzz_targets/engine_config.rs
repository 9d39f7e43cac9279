#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::config::EngineConfig;

fuzz_target!(|text: &str| {
    let _ = EngineConfig::from_toml(text);
});
