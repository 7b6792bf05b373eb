#![no_main]

use libfuzzer_sys::fuzz_target;
use see_core::curves::{parse_aggregate, parse_curve};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_curve(text);
        let _ = parse_aggregate(text);
    }
});
