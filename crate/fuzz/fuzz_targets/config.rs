#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab::config::KeyValues;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kv) = KeyValues::parse(text) {
        for key in kv.keys() {
            let _ = kv.get::<f64>(key);
        }
    }
});
