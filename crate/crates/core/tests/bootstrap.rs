mod common;

use eqte::bootstrap::{b_out_of_n_bootstrap, default_b, full_bootstrap, BootstrapConfig};
use eqte::{Dataset, ObservedRecord};
use proptest::prelude::*;

fn mean_outcome(d: &Dataset, _seed: u64) -> eqte::Result<Vec<f64>> {
    Ok(vec![d.outcomes().iter().sum::<f64>() / d.n() as f64])
}

#[test]
fn sample_mean_se_matches_the_analytic_value() {
    let data = common::random_dataset(200, 1, 5, |_, _, e| 3.0 + 2.0 * e);
    let y = data.outcomes();
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let s = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let boot = full_bootstrap(&data, mean_outcome, &BootstrapConfig::new(2000, 1)).unwrap();
    let analytic = s / n.sqrt();
    assert!((boot[0].se - analytic).abs() <= 0.1 * analytic, "se {} vs {analytic}", boot[0].se);
    assert!(boot[0].ci_low <= boot[0].point && boot[0].point <= boot[0].ci_high);
    let b = &boot[0];
    let reps_mean = b.replicates.iter().sum::<f64>() / b.replicates.len() as f64;
    assert!((b.bias - (reps_mean - b.point)).abs() < 1e-12);
}

#[test]
fn identical_rows_collapse_the_interval() {
    let rows = vec![ObservedRecord::new(4.5, true, vec![1.0]).unwrap(); 30];
    let data = Dataset::new(rows, vec!["x".into()]).unwrap();
    let b = &full_bootstrap(&data, mean_outcome, &BootstrapConfig::new(100, 3)).unwrap()[0];
    assert_eq!(b.se, 0.0);
    assert_eq!((b.ci_low, b.ci_high), (4.5, 4.5));
}

#[test]
fn full_sized_subsampling_matches_the_full_bootstrap() {
    let data = common::random_dataset(50, 1, 6, |_, x, e| x[0] + e);
    let cfg = BootstrapConfig::new(150, 11);
    let a = &full_bootstrap(&data, mean_outcome, &cfg).unwrap()[0];
    let b = &b_out_of_n_bootstrap(&data, mean_outcome, 50, &cfg).unwrap()[0];
    assert_eq!(a.replicates, b.replicates);
    assert_eq!((a.se, a.ci_low, a.ci_high), (b.se, b.ci_low, b.ci_high));
    assert!(b_out_of_n_bootstrap(&data, mean_outcome, 5, &cfg).is_err());
    assert!(b_out_of_n_bootstrap(&data, mean_outcome, 51, &cfg).is_err());
    assert_eq!(default_b(1000), 100);
}

#[test]
fn too_few_replicates_or_too_many_failures() {
    let data = common::random_dataset(50, 1, 7, |_, _, e| e);
    assert!(full_bootstrap(&data, mean_outcome, &BootstrapConfig::new(99, 1)).is_err());
    let flaky = |d: &Dataset, s: u64| -> eqte::Result<Vec<f64>> {
        if s != 2 && s % 2 == 0 {
            Err(eqte::Error::Separation)
        } else {
            mean_outcome(d, 0)
        }
    };
    match full_bootstrap(&data, flaky, &BootstrapConfig::new(200, 2)) {
        Err(eqte::Error::ReplicateFailures { dominant, .. }) => assert_eq!(dominant, "separation"),
        other => panic!("expected replicate failures, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bootstrap_is_deterministic_by_seed(seed in 0u64..1_000_000, b in 10usize..60) {
        let data = common::random_dataset(60, 2, seed, |d, x, e| d + x[0] + e);
        let cfg = BootstrapConfig::new(100, seed);
        let stat = |d: &Dataset, s: u64| -> eqte::Result<Vec<f64>> {
            let y = d.outcomes();
            Ok(vec![y.iter().sum::<f64>() / y.len() as f64, y[0] + (s % 7) as f64])
        };
        prop_assert_eq!(full_bootstrap(&data, stat, &cfg).unwrap(), full_bootstrap(&data, stat, &cfg).unwrap());
        prop_assert_eq!(
            b_out_of_n_bootstrap(&data, stat, b, &cfg).unwrap(),
            b_out_of_n_bootstrap(&data, stat, b, &cfg).unwrap()
        );
        let other = full_bootstrap(&data, stat, &BootstrapConfig::new(100, seed + 1)).unwrap();
        prop_assert_ne!(other[0].replicates.clone(), full_bootstrap(&data, stat, &cfg).unwrap()[0].replicates.clone());
    }

    #[test]
    fn summary_ignores_replicate_order(mut v in prop::collection::vec(-1e3..1e3f64, 2..200), point in -10.0..10.0f64) {
        use eqte::bootstrap::{summarize, BootstrapMethod};
        let cfg = BootstrapConfig::new(100, 0);
        let a = summarize(point, v.clone(), 0, &cfg, BootstrapMethod::Full, None);
        v.reverse();
        let b = summarize(point, v, 0, &cfg, BootstrapMethod::Full, None);
        prop_assert_eq!((a.se, a.bias, a.ci_low, a.ci_high), (b.se, b.bias, b.ci_low, b.ci_high));
        prop_assert!(a.se >= 0.0 && a.ci_low <= a.ci_high);
    }
}
