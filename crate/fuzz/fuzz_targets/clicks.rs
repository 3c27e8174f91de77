#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab::ingest::parse_clicks;

fuzz_target!(|data: &[u8]| {
    let _ = parse_clicks(data);
});
