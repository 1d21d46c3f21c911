#![no_main]

use libfuzzer_sys::fuzz_target;
use nfce::dictionary::{encode_binary, parse_binary};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_binary(data) {
        assert_eq!(encode_binary(&m), data);
    }
});
