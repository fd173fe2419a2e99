mod common;

use eqte::data::parse_level_spec;
use eqte::qr::{fit_single, Design};
use eqte::threshold::{forward_stop, generate_candidates, select_transition, Convention};
use proptest::prelude::*;

/// Direct scan over every k, recomputing each running mean from scratch.
fn forward_stop_oracle(p: &[f64], lambda: f64) -> usize {
    (1..=p.len())
        .filter(|&k| {
            let mean = p[..k].iter().map(|&x| -(1.0 - x.min(1.0 - 1e-15)).ln()).sum::<f64>() / k as f64;
            mean <= lambda
        })
        .max()
        .unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn forward_stop_matches_brute_force(
        p in prop::collection::vec(prop_oneof![0.0..1.0f64, Just(0.0), Just(1.0)], 0..20),
        lambda in prop_oneof![1e-4..2.0f64, Just(0.05)],
    ) {
        prop_assert_eq!(forward_stop(&p, lambda), forward_stop_oracle(&p, lambda));
    }

    #[test]
    fn larger_lambda_never_lowers_k_hat(
        p in prop::collection::vec(0.0..1.0f64, 1..15),
        a in 1e-3..1.0f64,
        b in 1e-3..1.0f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(forward_stop(&p, lo) <= forward_stop(&p, hi));
    }
}

#[test]
fn running_means_fixture() {
    // running means 0.0010, 0.0015, 0.7685
    let p = [0.001, 0.002, 0.9];
    assert_eq!(forward_stop(&p, 0.05), 2);
    assert_eq!(forward_stop_oracle(&p, 0.05), 2);
    assert_eq!(forward_stop(&p, 0.001), 0);
}

#[test]
fn exceedance_counts_track_levels() {
    let data = common::gpd_tailed_dataset(500, 11);
    let levels = parse_level_spec("0.75:0.99:10").unwrap();
    let cands = generate_candidates(&data, &levels).unwrap();
    for c in &cands {
        let expected = 500.0 * (1.0 - c.level);
        let sd = (500.0 * c.level * (1.0 - c.level)).sqrt();
        assert!(
            (c.n_exceedances as f64 - expected).abs() <= 4.0 * sd + data.n_covariates() as f64 + 2.0,
            "level {}: {} exceedances",
            c.level,
            c.n_exceedances
        );
    }
    assert!(generate_candidates(&data, &[0.8, 0.8, 0.9]).is_err());
}

#[test]
fn intercept_only_thresholds_are_sample_quantiles() {
    let y: Vec<f64> = (1..=40).map(|i| ((i * 37) % 41) as f64).collect();
    let design = Design::intercept_only(y.len());
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    for tau in [0.75, 0.8, 0.9] {
        let fit = fit_single(&design, &y, tau).unwrap();
        let k = (tau * 40.0f64).ceil() as usize;
        assert!((fit.coefficients[0] - sorted[k - 1]).abs() < 1e-6, "tau {tau}");
    }
}

#[test]
fn pure_gpd_tail_selects_first_candidate() {
    let levels = parse_level_spec("0.75:0.99:10").unwrap();
    let (mut zero, mut large, mut testable) = (0, 0, 0);
    for seed in 0..5 {
        let data = common::gpd_tailed_dataset(1000, 100 + seed);
        for convention in [Convention::PaperLiteral, Convention::FirstAccepted] {
            let sel = select_transition(&data, &levels, 0.05, 199, seed, convention).unwrap();
            if sel.k_hat == 0 {
                assert_eq!(sel.selected_level, 0.75);
            }
        }
        let sel = select_transition(&data, &levels, 0.05, 199, seed, Convention::PaperLiteral).unwrap();
        if sel.k_hat == 0 {
            zero += 1;
        }
        large += sel.candidates.iter().filter(|c| c.is_testable() && c.p_value > 0.1).count();
        testable += sel.candidates.iter().filter(|c| c.is_testable()).count();
    }
    assert!(large as f64 >= 0.7 * testable as f64, "{large} of {testable} p-values above 0.1");
    assert!(zero >= 4, "k_hat = 0 in only {zero} of 5 runs");
}

#[test]
fn misspecified_body_pushes_the_threshold_up() {
    // Uniform body up to the 0.95 quantile, GPD(ξ = 0.3) above it.
    use eqte::{Dataset, ObservedRecord};
    use rand::Rng;
    let levels = parse_level_spec("0.75:0.99:10").unwrap();
    let mut high = 0;
    for seed in 0..5u64 {
        let mut r = eqte::rng::stream(seed, 9);
        let records = (0..2000)
            .map(|_| {
                let x: f64 = r.random();
                let d = r.random::<f64>() < 0.5;
                let u: f64 = r.random();
                let e = if u < 0.95 {
                    u / 0.95
                } else {
                    1.0 + (((1.0 - u) / 0.05).powf(-0.3) - 1.0) / 0.3 * 0.1
                };
                ObservedRecord::new(e + 0.1 * x, d, vec![x]).unwrap()
            })
            .collect();
        let data = Dataset::new(records, vec!["x".into()]).unwrap();
        let sel = select_transition(&data, &levels, 0.05, 199, seed, Convention::PaperLiteral).unwrap();
        if sel.k_hat > 0 && sel.selected_level >= 0.90 {
            high += 1;
        }
    }
    assert!(high >= 3, "selected level >= 0.90 in only {high} of 5 runs");
}

#[test]
fn huge_lambda_rejects_everything() {
    let data = common::gpd_tailed_dataset(400, 5);
    let levels = parse_level_spec("0.75:0.95:5").unwrap();
    let sel = select_transition(&data, &levels, 1e9, 99, 1, Convention::PaperLiteral).unwrap();
    assert_eq!(sel.k_hat, 5);
    assert_eq!(sel.selected_level, 0.95);
    assert!(!sel.warnings.is_empty());
}

#[test]
fn selection_is_deterministic() {
    let data = common::gpd_tailed_dataset(400, 6);
    let levels = parse_level_spec("0.75:0.95:5").unwrap();
    let a = select_transition(&data, &levels, 0.05, 99, 42, Convention::PaperLiteral).unwrap();
    let b = select_transition(&data, &levels, 0.05, 99, 42, Convention::PaperLiteral).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_selection_arguments() {
    let data = common::gpd_tailed_dataset(200, 7);
    let levels = parse_level_spec("0.75:0.95:5").unwrap();
    assert!(select_transition(&data, &levels, 0.0, 99, 1, Convention::PaperLiteral).is_err());
    assert!(select_transition(&data, &levels, 0.05, 10, 1, Convention::PaperLiteral).is_err());
}
