#![no_main]

use libfuzzer_sys::fuzz_target;
use scene_synth::io::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = decode_checkpoint(data) {
        assert_eq!(encode_checkpoint(&g), data);
    }
});
