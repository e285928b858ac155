#![no_main]

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use libfuzzer_sys::fuzz_target;
use scene_synth::io::{decode_pfm, decode_png};
use scene_synth::provider::wire;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<wire::CandidatesResponse>(data) {
        for c in r.candidates {
            if let Ok(bytes) = B64.decode(c) {
                let _ = decode_png(&bytes);
            }
        }
    }
    if let Ok(r) = serde_json::from_slice::<wire::DepthResponse>(data) {
        if let Ok(bytes) = B64.decode(r.depth) {
            let _ = decode_pfm(&bytes);
        }
    }
    let _ = serde_json::from_slice::<wire::ImageResponse>(data);
    let _ = serde_json::from_slice::<wire::EmbedResponse>(data);
    let _ = serde_json::from_slice::<wire::ErrorBody>(data);
});
