#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::ledger::{verify_log_bytes, EventLog};

fuzz_target!(|data: &[u8]| {
    let report = verify_log_bytes(data);
    if report.ok {
        assert!(report.first_bad_seq.is_none());
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = EventLog::from_text(text);
    }
});
