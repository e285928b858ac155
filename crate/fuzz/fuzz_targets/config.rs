#![no_main]

use libfuzzer_sys::fuzz_target;
use scene_synth::io::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_toml(s) {
        let _ = c.trajectory_pattern();
        let _ = c.pipeline();
        let again = RunConfig::from_toml(&c.to_toml().expect("valid config serializes")).expect("round trip");
        assert_eq!(again, c);
    }
});
