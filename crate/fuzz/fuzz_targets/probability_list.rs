#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(ps) = eqte::data::parse_probability_list(s) {
            assert!(ps.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
});
