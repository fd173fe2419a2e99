//! Replays the fuzz seed corpora through the parsers with the same
//! invariants the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use eqte::data::{ingest_csv, parse_level_spec, parse_probability_list};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn csv_seeds() {
    let mut accepted = Vec::new();
    for (name, bytes) in seeds("ingest_csv") {
        if let Ok(ds) = ingest_csv(bytes.as_slice(), "y", "d", &["x1", "x2"]) {
            assert!(ds.n() > 0 && ds.n_covariates() == 2);
            assert!(ds.records().iter().all(|r| r.outcome.is_finite()));
            accepted.push(name);
        }
    }
    assert_eq!(accepted, ["basic.csv"]);
}

#[test]
fn level_spec_seeds() {
    let mut accepted = Vec::new();
    for (name, bytes) in seeds("level_spec") {
        if let Ok(levels) = parse_level_spec(&String::from_utf8_lossy(&bytes)) {
            assert!(levels.iter().all(|&t| t > 0.0 && t < 1.0));
            assert!(levels.windows(2).all(|w| w[0] < w[1]));
            accepted.push(name);
        }
    }
    assert_eq!(accepted, ["basic", "single", "spaces"]);
}

#[test]
fn probability_list_seeds() {
    let mut accepted = Vec::new();
    for (name, bytes) in seeds("probability_list") {
        if let Ok(ps) = parse_probability_list(&String::from_utf8_lossy(&bytes)) {
            assert!(ps.iter().all(|&p| p > 0.0 && p < 1.0));
            accepted.push(name);
        }
    }
    assert_eq!(accepted, ["default", "single"]);
}
