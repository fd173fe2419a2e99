#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = eqte::data::ingest_csv(data, "y", "d", &["x1", "x2"]) {
        assert!(ds.n() > 0);
        assert_eq!(ds.n_covariates(), 2);
        assert!(ds.records().iter().all(|r| r.outcome.is_finite()));
    }
});
