#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab::ingest::parse_buys;

fuzz_target!(|data: &[u8]| {
    let _ = parse_buys(data);
});
