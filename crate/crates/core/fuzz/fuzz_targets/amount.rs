#![no_main]

use libfuzzer_sys::fuzz_target;
use rcp_core::model::{quantize, Amount};

fuzz_target!(|input: (u8, &str)| {
    let (decimals, text) = input;
    if let Ok(a) = text.parse::<Amount>() {
        assert_eq!(a.to_string().parse::<Amount>().ok(), Some(a));
    }
    let _ = quantize(text, decimals % 40);
});
