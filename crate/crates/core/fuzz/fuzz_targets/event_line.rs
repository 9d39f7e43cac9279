#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::ledger::LedgerEvent;

fuzz_target!(|line: &str| {
    // Accepted lines are canonical, so they round-trip byte for byte.
    if let Ok(event) = LedgerEvent::from_line(line) {
        assert_eq!(event.to_line(), line);
    }
});
