#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab::EmbeddingMatrix;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = EmbeddingMatrix::parse(text) {
        let again = EmbeddingMatrix::parse(&m.to_text()).expect("written embeddings parse");
        assert_eq!((again.n(), again.q()), (m.n(), m.q()));
    }
});
