use eqte::methods::{EstimatorConfig, Method};
use eqte::rng;
use eqte::simulation::{
    draw_unit, generate_dgp, generate_traffic, oracle_truths, propensity, run_study, summarize_estimates, DgpConfig,
    ErrorKind, StudyConfig, TRAFFIC_COVARIATES,
};
use eqte::Estimand;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use rand::Rng;

#[test]
fn treated_share_matches_the_mean_propensity() {
    // Covariate-only oracle, independent of the unit generator.
    let mut r = rng::stream(999, 0);
    let x1 = Normal::new(15.0, 6.0).unwrap();
    let x2 = Exp::new(0.5).unwrap();
    let draws = 1_000_000;
    let mean_pi = (0..draws)
        .map(|_| {
            let x = [x1.sample(&mut r), x2.sample(&mut r), 1.0 + r.sample::<f64, _>(StandardNormal)];
            propensity(&x)
        })
        .sum::<f64>()
        / draws as f64;
    let data = generate_dgp(DgpConfig {
        n: 100_000,
        error_kind: ErrorKind::GaussianSd10,
        seed: 5,
    })
    .unwrap();
    let share = data.n_treated() as f64 / data.n() as f64;
    let se = (mean_pi * (1.0 - mean_pi) / 1e5).sqrt();
    assert!((share - mean_pi).abs() < 4.0 * se + 1e-3, "share {share} vs {mean_pi}");
}

#[test]
fn oracle_is_seed_stable_at_the_median() {
    let a = oracle_truths(&[0.5], ErrorKind::GaussianSd10, 1_000_000, 1).unwrap()[0];
    let b = oracle_truths(&[0.5], ErrorKind::GaussianSd10, 1_000_000, 2).unwrap()[0];
    // Monte Carlo sd of each median difference is well under 0.2 at 10^6 draws.
    assert!((a.qte - b.qte).abs() < 3.0 * 0.2 * 2f64.sqrt(), "{} vs {}", a.qte, b.qte);
    assert!((a.qtt - b.qtt).abs() < 3.0 * 0.4 * 2f64.sqrt(), "{} vs {}", a.qtt, b.qtt);
    eprintln!("oracle median QTE {} (naive location shift 45)", a.qte);
    assert!(oracle_truths(&[0.5], ErrorKind::GaussianSd10, 1000, 1).is_err());
}

#[test]
fn unit_draws_share_the_error_across_arms() {
    let mut r = rng::stream(3, 0);
    for _ in 0..100 {
        let u = draw_unit(ErrorKind::StudentTDf1, &mut r);
        let eps = (u.y0 - 10.0 - u.x[0] - 3.0 * u.x[1]) / (1.0 + 4.0 * u.x[1]);
        let y1 = 10.0 + 15.0 + u.x[0] + 3.0 * u.x[1] + 2.0 * u.x[0] + (4.0 + 4.0 * u.x[1]) * eps;
        assert!((u.y1 - y1).abs() < 1e-6 * (1.0 + y1.abs()));
    }
}

#[test]
fn relative_metrics_are_self_relative_for_the_proposed_method() {
    let s = summarize_estimates(&[100.0, 110.0], 100.0);
    assert_eq!(s.relative_bias_pct, 5.0);
    let config = StudyConfig {
        n_list: vec![300],
        error_kinds: vec![ErrorKind::GaussianSd10],
        p_list: vec![0.5, 0.9],
        estimands: vec![Estimand::Qte],
        methods: vec![Method::Ipw, Method::Proposed],
        n_replicates: 50,
        seed: 4,
        oracle_draws: 1_000_000,
        estimator: EstimatorConfig {
            proposed: eqte::counterfactual::ProposedConfig {
                ad_replicates: 99,
                ..Default::default()
            },
            ..Default::default()
        },
    };
    let res = run_study(&config).unwrap();
    for r in res.rows.iter().filter(|r| r.method == Method::Proposed) {
        assert_eq!(r.relative_variance, Some(1.0));
        assert_eq!(r.relative_mse, Some(1.0));
    }
    let mut csv = Vec::new();
    res.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * 2);
    let table = res.to_table();
    assert!(table.contains("TMLE") && table.contains("RMSE"));

    let mut short = config.clone();
    short.n_replicates = 10;
    assert!(run_study(&short).is_err());
}

#[test]
fn traffic_data_has_the_site_schema() {
    let d = generate_traffic(500, 1).unwrap();
    assert_eq!(d.covariate_names(), TRAFFIC_COVARIATES);
    assert!(d.outcomes().iter().all(|&y| y > 0.0));
    assert!(d.n_treated() > 50 && d.n_treated() < 450);
    assert_eq!(d, generate_traffic(500, 1).unwrap());
}
