#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(levels) = eqte::data::parse_level_spec(s) {
            assert!(levels.iter().all(|&t| t > 0.0 && t < 1.0));
            assert!(levels.windows(2).all(|w| w[0] < w[1]));
        }
    }
});
