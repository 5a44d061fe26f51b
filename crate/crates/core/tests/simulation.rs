//! Large-sample checks of the simulation models against their analytic moments.

use caradj::data::{read_csv, write_csv, ColumnSchema, Stratified};
use caradj::estimators::EstimatorKind;
use caradj::gram::sample_gram;
use caradj::numeric::{mean, sample_sd};
use caradj::randomization::{assign, draw_strata, RandomizationScheme};
use caradj::sim::{
    generate, monte_carlo_truth, run_monte_carlo, true_gram, true_tau, DgpConfig, RunSettings, ScaleKind, TRUTH_DRAWS,
};
use caradj::variance::sigma2_baseline_with;

const MILLION: usize = 1_000_000;

#[test]
fn mahalanobis_mean_is_fifty() {
    // with no noise, Y(1) - stratum = 0.05 * x' S^{-1} x exactly
    let cfg = DgpConfig {
        noise_sd: 0.0,
        ..DgpConfig::model1(MILLION, 1)
    };
    let rep = generate(&cfg, 11, 12).unwrap();
    let maha: Vec<f64> = rep.y1.iter().zip(&rep.strata).map(|(y, &s)| (y - s as f64) / 0.05).collect();
    let m = mean(&maha);
    assert!((m - 50.0).abs() <= 0.5, "mean Mahalanobis distance {m}");
}

#[test]
fn ar_gram_matches_empirical_second_moments() {
    let cfg = DgpConfig::model1(MILLION, 2);
    let rep = generate(&cfg, 21, 22).unwrap();
    let empirical = sample_gram(rep.dataset.covariates()).unwrap();
    let truth = true_gram(&cfg).unwrap().matrix;
    let c = 5.0 / 3.0;
    assert!((truth[(0, 0)] - c).abs() < 1e-12 && (truth[(0, 1)] - 0.1 * c).abs() < 1e-12);
    let worst = (&empirical - &truth).abs().max();
    assert!(worst <= 0.01, "empirical\n{empirical}\ntrue\n{truth}");
}

#[test]
fn model1_truth_matches_large_monte_carlo() {
    let cfg = DgpConfig::model1(600, 30);
    let mc = monte_carlo_truth(&cfg, MILLION as u64, 31).unwrap();
    let tau = true_tau(&cfg).unwrap().tau;
    assert!((tau - 10.0 / 3.0).abs() < 1e-12);
    assert!((mc.tau - tau).abs() <= 3.0 * mc.se, "{mc:?} vs {tau}");
}

#[test]
fn model1_sample_effect_converges_to_truth() {
    let tau = 10.0 / 3.0;
    let mut prev = f64::INFINITY;
    for n in [10_000, 100_000, MILLION] {
        let rep = generate(&DgpConfig::model1(n, 1), 41, 42).unwrap();
        let diff: Vec<f64> = rep.y1.iter().zip(&rep.y0).map(|(a, b)| a - b).collect();
        let se = sample_sd(&diff) / (n as f64).sqrt();
        assert!((rep.sample_ate() - tau).abs() <= 3.0 * se, "n = {n}: {} vs {tau}", rep.sample_ate());
        assert!(se < prev);
        prev = se;
    }
}

#[test]
fn model2_truth_is_reproducible_and_self_consistent() {
    let cfg = DgpConfig::model2(600, 30);
    let cached = true_tau(&cfg).unwrap();
    assert!(cached.se > 0.0 && cached.se <= 2e-4, "{cached:?}");
    let fresh = monte_carlo_truth(&cfg, TRUTH_DRAWS, 0x5eed).unwrap();
    let combined = (cached.se.powi(2) + fresh.se.powi(2)).sqrt();
    assert!((cached.tau - fresh.tau).abs() <= 6.0 * combined, "{cached:?} vs {fresh:?}");

    let rep = generate(&DgpConfig::model2(MILLION, 1), 51, 52).unwrap();
    assert!(rep.y0.iter().chain(&rep.y1).all(|&y| y == 0.0 || y == 1.0));
    assert!((rep.sample_ate() - cached.tau).abs() <= 0.005, "{} vs {}", rep.sample_ate(), cached.tau);
}

#[test]
fn stratum_shares_concentrate() {
    let n = 10_000;
    let rep = generate(&DgpConfig::model1(n, 1), 61, 62).unwrap();
    let strat = Stratified::new(&rep.dataset);
    for (block, p) in strat.blocks().iter().zip([0.2, 0.2, 0.3, 0.3]) {
        let share = block.n() as f64 / n as f64;
        let env = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((share - p).abs() <= env, "stratum {}: {share} vs {p}", block.label());
    }
}

#[test]
fn treated_fraction_deviation_shrinks_with_n() {
    let schemes = [
        RandomizationScheme::simple(0.5).unwrap(),
        RandomizationScheme::permuted_block(6, 0.5).unwrap(),
        RandomizationScheme::biased_coin(2.0 / 3.0).unwrap(),
    ];
    for scheme in &schemes {
        let mut prev = f64::INFINITY;
        for n in [100, 1_000, 10_000] {
            let mut dev = 0.0;
            let seeds = 200;
            for seed in 0..seeds {
                let strata = draw_strata(&[0.5, 0.5], n, seed).unwrap();
                let arms = assign(scheme, &strata, seed + 1_000).unwrap();
                let treated = arms.iter().filter(|&&a| a == 1).count() as f64;
                dev += (treated / n as f64 - 0.5).abs();
            }
            let dev = dev / seeds as f64;
            assert!(dev < prev, "{:?}: n = {n} mean deviation {dev} not below {prev}", scheme.kind());
            prev = dev;
        }
    }
}

fn settings(kinds: &[EstimatorKind], replicates: usize) -> RunSettings {
    RunSettings {
        kinds: kinds.to_vec(),
        replicates,
        seed: 7_001,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..RunSettings::default()
    }
}

#[test]
fn unadjusted_is_unbiased_over_replicates() {
    let r = 2000;
    let res = run_monte_carlo(&DgpConfig::model1(600, 1), &settings(&[EstimatorKind::Unadjusted], r))
        .unwrap()
        .result;
    let m = res.metrics(EstimatorKind::Unadjusted).unwrap();
    assert!(m.bias <= 3.0 * m.sd / (r as f64).sqrt(), "{m:?}");
}

#[test]
fn ols_variance_estimate_is_consistent_at_small_dimension() {
    let n = 1600;
    let run = run_monte_carlo(&DgpConfig::model1(n, 5), &settings(&[EstimatorKind::Ols], 500)).unwrap();
    let taus: Vec<f64> = run.records.iter().map(|r| r.estimates[0].tau_hat).collect();
    let sigma2: Vec<f64> = run.records.iter().map(|r| r.estimates[0].sigma2_hat).collect();
    let target = n as f64 * sample_sd(&taus).powi(2);
    let rel = (mean(&sigma2) - target).abs() / target;
    assert!(rel <= 0.15, "relative error {rel}");
}

#[test]
fn ols_baseline_variance_without_covariates_is_unadjusted() {
    let rep = generate(&DgpConfig::model1(400, 0), 71, 72).unwrap();
    let strat = Stratified::new(&rep.dataset);
    let unadj = sigma2_baseline_with(&strat, EstimatorKind::Unadjusted, &[]).unwrap();
    let grams = caradj::estimators::sample_grams(&strat, 1e-10).unwrap();
    let ols = sigma2_baseline_with(&strat, EstimatorKind::Ols, &grams).unwrap();
    assert_eq!(unadj, ols);
}

#[test]
fn model1_export_round_trips_bit_exactly() {
    let cfg = DgpConfig {
        scale: ScaleKind::Ar,
        ..DgpConfig::model1(1000, 30)
    };
    let rep = generate(&cfg, 81, 82).unwrap();
    let schema = ColumnSchema::default();
    let mut buf = Vec::new();
    write_csv(&rep.dataset, &mut buf, &schema).unwrap();
    let back = read_csv(buf.as_slice(), &schema).unwrap();
    assert_eq!(back, rep.dataset);
    assert_eq!((back.n(), back.p(), back.k()), (1000, 30, 4));
}
