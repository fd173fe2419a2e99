#![allow(dead_code)]

use eqte::rng;
use eqte::{Dataset, ObservedRecord};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// `n` units with `k` standard normal covariates, treatment with
/// probability `logistic(0.5 x_0)` and outcome from `outcome(d, x, noise)`.
pub fn random_dataset(n: usize, k: usize, seed: u64, outcome: impl Fn(f64, &[f64], f64) -> f64) -> Dataset {
    let mut r = rng::stream(seed, 0);
    let records = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..k).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let lin = if k > 0 { 0.5 * x[0] } else { 0.0 };
            let d = r.random::<f64>() < 1.0 / (1.0 + (-lin).exp());
            let e: f64 = r.sample(StandardNormal);
            ObservedRecord::new(outcome(if d { 1.0 } else { 0.0 }, &x, e), d, x).unwrap()
        })
        .collect();
    Dataset::new(records, (0..k).map(|j| format!("x{j}")).collect()).unwrap()
}

/// Heteroskedastic linear outcome with a GPD(ξ = 0.2) error, so every upper
/// quantile of the error has an exact GPD tail.
pub fn gpd_tailed_dataset(n: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, 0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let records = (0..n)
        .map(|_| {
            let x = normal.sample(&mut r);
            let d = r.random::<f64>() < 0.4;
            let u: f64 = r.random_range(1e-12..1.0);
            let e = ((u).powf(-0.2) - 1.0) / 0.2;
            let y = 2.0 + 1.5 * if d { 1.0 } else { 0.0 } + 0.8 * x + e;
            ObservedRecord::new(y, d, vec![x]).unwrap()
        })
        .collect();
    Dataset::new(records, vec!["x".into()]).unwrap()
}
