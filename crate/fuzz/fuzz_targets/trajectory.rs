#![no_main]

use libfuzzer_sys::fuzz_target;
use scene_synth::camera::TrajectoryPattern;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(p) = s.parse::<TrajectoryPattern>() {
        let back: TrajectoryPattern = p.to_string().parse().expect("displayed pattern parses");
        assert_eq!(back, p);
    }
});
