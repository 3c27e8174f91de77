#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab::format::{parse_slates, write_slates};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((n, k, slates)) = parse_slates(text) {
        let again = parse_slates(&write_slates(n, k, &slates)).expect("written slates parse");
        assert_eq!(again, (n, k, slates));
    }
});
