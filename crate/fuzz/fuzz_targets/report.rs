#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab::harness::{parse_report, write_report};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_report(text) {
        let written = write_report(&records);
        let again = parse_report(&written).expect("written report parses");
        assert_eq!(write_report(&again), written);
    }
});
