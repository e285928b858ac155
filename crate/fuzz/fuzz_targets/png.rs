#![no_main]

use libfuzzer_sys::fuzz_target;
use scene_synth::io::{decode_png, encode_png};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_png(data) {
        assert_eq!(decode_png(&encode_png(&img)).expect("re-encoded image decodes"), img);
    }
});
