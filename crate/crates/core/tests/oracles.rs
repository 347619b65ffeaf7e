//! Numerical examples checked against independent reference computations.

mod common;

use common::normal_quantile;
use ddboot::bootstrap::{
    bootstrap_ensemble, mean_bundle, run_test, statistic_law, weighted_mean, LawMode, ResampleScheme, TestSettings,
};
use ddboot::convex::{run_projection_test, ConvexSet, EpsilonRule, ProjectionProblem, SupMode};
use ddboot::functional::{
    estimate_derivative, eval_derivative, gaussian_limit, invariance_probe, local_limit_law_max, FunctionalSpec, Tuning,
};
use ddboot::grid::Theta;
use ddboot::inference::invert_test_for_ci;
use ddboot::law::EmpiricalLaw;
use ddboot::quantile::{qr_bootstrap_ensemble, qr_fit, simulate_dgp, TauGrid};
use ddboot::rng::{substream, SeedManifest};
use rand_distr::{Distribution, StandardNormal};
use statrs::statistics::Statistics;

fn normal_rows(n: usize, mean: &[f64], seed: u64, rep: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, &[rep]);
    (0..n)
        .map(|_| {
            mean.iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect()
        })
        .collect()
}

fn mean_estimator(rows: &[Vec<f64>], w: &[f64]) -> ddboot::Result<Vec<f64>> {
    weighted_mean(rows, w)
}

#[test]
fn half_normal_quantile() {
    let mut rng = substream(1, &[1]);
    let atoms: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs()
        })
        .collect();
    let q = EmpiricalLaw::new(atoms).unwrap().quantile(0.95).unwrap();
    assert!((q - normal_quantile(0.975)).abs() <= 0.01, "q = {q}");
}

#[test]
fn kinked_derivative_examples() {
    let abs = eval_derivative(&FunctionalSpec::AbsMean, &Theta::scalar(0.0), &[-2.0]).unwrap();
    assert_eq!(abs, 2.0);
    let max = eval_derivative(
        &FunctionalSpec::MaxCoord { dim: 2 },
        &Theta::vector(vec![1.0, 1.0]),
        &[2.0, -1.0],
    )
    .unwrap();
    assert_eq!(max, 2.0);
}

#[test]
fn bootstrap_variance_of_the_mean() {
    let rows = normal_rows(10_000, &[0.0], 2, 0);
    let bundle = mean_bundle(&rows).unwrap();
    let ens = bootstrap_ensemble(
        mean_estimator,
        rows.as_slice(),
        &bundle,
        2000,
        ResampleScheme::Multinomial,
        &SeedManifest::new(2, vec![9]),
    )
    .unwrap();
    let v = ens.draws().iter().map(|d| d[0]).collect::<Vec<_>>().variance();
    assert!((0.9..=1.1).contains(&v), "variance {v}");
}

#[test]
fn modified_abs_mean_critical_value() {
    let rows = normal_rows(10_000, &[0.0], 3, 0);
    let sigma = rows.iter().map(|r| r[0]).collect::<Vec<_>>().std_dev();
    let bundle = mean_bundle(&rows).unwrap();
    let report = run_test(
        mean_estimator,
        rows.as_slice(),
        &bundle,
        &FunctionalSpec::AbsMean,
        None,
        &TestSettings::new(0.05, 2000),
        &SeedManifest::new(3, vec![9]),
    )
    .unwrap();
    let target = normal_quantile(0.975) * sigma;
    assert!(
        (report.critical_value - target).abs() <= 0.05,
        "{}",
        report.critical_value
    );
}

#[test]
fn abs_mean_selection_is_consistent() {
    let agree = (0..100)
        .filter(|&rep| {
            let rows = normal_rows(10_000, &[1.0], 4, rep);
            let bundle = mean_bundle(&rows).unwrap();
            let tuning = Tuning::default_for(&FunctionalSpec::AbsMean, 10_000);
            let d = estimate_derivative(&FunctionalSpec::AbsMean, &bundle, tuning).unwrap();
            d.eval(&[-2.0]).unwrap() == -2.0
        })
        .count();
    assert!(agree >= 99, "{agree} of 100");
}

#[test]
fn ci_inversion_matches_normal_theory() {
    let rows = normal_rows(400, &[2.0], 5, 0);
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let (xbar, s) = (xs.iter().mean(), xs.iter().std_dev());
    let candidates: Vec<f64> = (0..=160).map(|k| 1.6 + 0.005 * k as f64).collect();
    let test = |c: f64, alpha: f64| {
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] - c]).collect();
        let bundle = mean_bundle(&shifted).unwrap();
        run_test(
            mean_estimator,
            shifted.as_slice(),
            &bundle,
            &FunctionalSpec::AbsMean,
            None,
            &TestSettings::new(alpha, 2000),
            &SeedManifest::new(5, vec![9]),
        )
    };
    let set = invert_test_for_ci(test, &candidates, 0.05).unwrap();
    assert_eq!(set.intervals.len(), 1);
    let (lo, hi) = set.intervals[0];
    let half = normal_quantile(0.975) * s / 20.0;
    assert!((lo - (xbar - half)).abs() <= 0.01, "lower {lo} vs {}", xbar - half);
    assert!((hi - (xbar + half)).abs() <= 0.01, "upper {hi} vs {}", xbar + half);
    assert!(set.contains(2.0));
}

#[test]
fn limit_law_of_max_of_two_normals() {
    let draws = 100_000;
    let law = local_limit_law_max(
        &[0.0, 0.0],
        &[vec![1.0, 0.0], vec![0.0, 1.0]],
        draws,
        &SeedManifest::new(6, vec![3]),
    )
    .unwrap();
    let target = 1.0 / std::f64::consts::PI.sqrt();
    let tol = 3.0 * law.variance().sqrt() / (draws as f64).sqrt();
    assert!((law.mean() - target).abs() <= tol, "mean {}", law.mean());
}

#[test]
fn probe_separates_kinked_derivatives() {
    let seed = SeedManifest::new(7, vec![5]);
    let abs = |h: &[f64]| Ok(h[0].abs());
    let rows = invariance_probe(abs, gaussian_limit(&[vec![1.0]]).unwrap(), &[vec![3.0]], 10_000, &seed).unwrap();
    assert!(rows[0].bl_distance > 0.2, "{:?}", rows[0]);
    assert!(!rows[0].indistinguishable);

    let max = |h: &[f64]| Ok(h[0].max(h[1]));
    let cov = [vec![1.0, 0.0], vec![0.0, 1.0]];
    let rows = invariance_probe(max, gaussian_limit(&cov).unwrap(), &[vec![10.0, 0.0]], 10_000, &seed).unwrap();
    assert!(rows[0].bl_distance > 0.1, "{:?}", rows[0]);

    let linear = |h: &[f64]| Ok(h[0] - 2.0 * h[1]);
    let rows = invariance_probe(linear, gaussian_limit(&cov).unwrap(), &[vec![1.0, 5.0]], 10_000, &seed).unwrap();
    assert!(rows[0].indistinguishable, "{:?}", rows[0]);
}

fn projection_rate(mean: [f64; 2], reps: u64) -> f64 {
    let problem = ProjectionProblem {
        set: ConvexSet::orthant(2),
        epsilon: EpsilonRule::new(1.0, 1.0 / 3.0).unwrap(),
        mode: SupMode::Threshold,
        settings: TestSettings::new(0.05, 200),
    };
    let rejections = (0..reps)
        .filter(|&rep| {
            let rows = normal_rows(500, &mean, 8, rep);
            let bundle = mean_bundle(&rows).unwrap();
            run_projection_test(
                mean_estimator,
                rows.as_slice(),
                &bundle,
                &problem,
                &SeedManifest::new(8, vec![rep]),
            )
            .unwrap()
            .reject
        })
        .count();
    rejections as f64 / reps as f64
}

#[test]
fn projection_test_size_and_power() {
    let size = projection_rate([0.0, 0.0], 500);
    assert!((0.01..=0.08).contains(&size), "size {size}");
    let power = projection_rate([0.3, 0.3], 200);
    assert!(power >= 0.5, "power {power}");
}

#[test]
fn max_moment_test_controls_size() {
    let spec = FunctionalSpec::MaxCoord { dim: 2 };
    let rejections = (0..500u64)
        .filter(|&rep| {
            let rows = normal_rows(500, &[0.0, 0.0], 9, rep);
            let bundle = mean_bundle(&rows).unwrap();
            run_test(
                mean_estimator,
                rows.as_slice(),
                &bundle,
                &spec,
                None,
                &TestSettings::new(0.05, 200),
                &SeedManifest::new(9, vec![rep]),
            )
            .unwrap()
            .reject
        })
        .count();
    assert!(rejections as f64 / 500.0 <= 0.07, "{rejections} rejections");
}

#[test]
fn qr_estimates_are_root_n_consistent() {
    let grid = TauGrid::default();
    let data = simulate_dgp(2000, 0.0, 0, 11).unwrap();
    let fit = qr_fit(&data, &grid).unwrap();
    let worst = fit.theta.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 0.15, "max |theta| = {worst}");
}

#[test]
fn qr_bootstrap_spread_matches_monte_carlo() {
    let grid = TauGrid {
        knots: vec![0.5],
        weight: 1.0,
    };
    let mc: Vec<f64> = (0..200)
        .map(|rep| {
            let data = simulate_dgp(500, 0.0, rep, 12).unwrap();
            qr_fit(&data, &grid).unwrap().theta.values()[0] * 500f64.sqrt()
        })
        .collect();
    let mc_sd = mc.std_dev();
    let data = simulate_dgp(500, 0.0, 0, 13).unwrap();
    let fit = qr_fit(&data, &grid).unwrap();
    let ens = qr_bootstrap_ensemble(&data, &fit, &grid, 200, &SeedManifest::new(13, vec![2])).unwrap();
    let boot_sd = ens.component_sd()[0];
    assert!(
        (0.5 * mc_sd..=2.0 * mc_sd).contains(&boot_sd),
        "bootstrap sd {boot_sd} vs Monte Carlo sd {mc_sd}"
    );
}

#[test]
fn modified_law_of_abs_mean_is_folded() {
    let rows = normal_rows(2000, &[0.0], 14, 0);
    let bundle = mean_bundle(&rows).unwrap();
    let ens = bootstrap_ensemble(
        mean_estimator,
        rows.as_slice(),
        &bundle,
        500,
        ResampleScheme::Multinomial,
        &SeedManifest::new(14, vec![1]),
    )
    .unwrap();
    let d = estimate_derivative(
        &FunctionalSpec::AbsMean,
        &bundle,
        Tuning::default_for(&FunctionalSpec::AbsMean, 2000),
    )
    .unwrap();
    let law = statistic_law(&ens, LawMode::Modified(&d)).unwrap();
    let mut folded: Vec<f64> = ens.draws().iter().map(|g| g[0].abs()).collect();
    folded.sort_by(f64::total_cmp);
    assert_eq!(law.atoms(), EmpiricalLaw::new(folded).unwrap().atoms());
}
