#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::policy::PolicySet;

fuzz_target!(|text: &str| {
    let _ = serde_json::from_str::<PolicySet>(text);
});
