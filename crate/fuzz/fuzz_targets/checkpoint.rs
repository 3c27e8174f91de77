#![no_main]

use libfuzzer_sys::fuzz_target;
use slatelab_autodiff::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::from_bytes(data) {
        let bytes = ckpt.to_bytes();
        let again = Checkpoint::from_bytes(&bytes).expect("written checkpoint loads");
        assert_eq!(again.to_bytes(), bytes);
    }
});
