#![no_main]

use libfuzzer_sys::fuzz_target;
use scene_synth::io::{decode_mask_png, decode_pbm, encode_pbm};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_pbm(data) {
        assert_eq!(decode_pbm(&encode_pbm(&m)).expect("re-encoded mask decodes"), m);
    }
    let _ = decode_mask_png(data);
});
