#![no_main]

use libfuzzer_sys::fuzz_target;
use scene_synth::io::{decode_pfm, encode_pfm};

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = decode_pfm(data) {
        let again = decode_pfm(&encode_pfm(&d)).expect("re-encoded depth decodes");
        assert_eq!(again, d);
    }
});
