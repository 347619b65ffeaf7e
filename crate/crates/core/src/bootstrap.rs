//! Resampling weights, bootstrap ensembles of `r_n (theta* - theta_hat)`,
//! the standard and derivative-composition laws, and test execution.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::functional::{estimate_derivative, eval_functional, DerivativeEstimate, FunctionalSpec, Tuning};
use crate::grid::Theta;
use crate::inference::{check_alpha, plug_in_statistic, EstimateBundle, TestReport};
use crate::law::EmpiricalLaw;
use crate::rng::{SeedManifest, StreamRng};

/// Law of i.i.d. multiplier weights, all with mean 1 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierLaw {
    /// Standard exponential.
    Exponential,
    /// `1 + N(0, 1)`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResampleScheme {
    /// Counts of `n` draws with replacement.
    #[default]
    Multinomial,
    Multiplier {
        law: MultiplierLaw,
    },
}

pub fn draw_resample_weights(scheme: ResampleScheme, n: usize, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n", "need at least one observation"));
    }
    Ok(match scheme {
        ResampleScheme::Multinomial => {
            let mut counts = vec![0.0; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1.0;
            }
            counts
        }
        ResampleScheme::Multiplier { law } => (0..n)
            .map(|_| match law {
                MultiplierLaw::Exponential => Exp1.sample(rng),
                MultiplierLaw::Gaussian => {
                    let z: f64 = StandardNormal.sample(rng);
                    1.0 + z
                }
            })
            .collect(),
    })
}

/// Weights drawn independently within consecutive strata of the given
/// sizes (e.g. two independent samples stacked in one data set).
pub fn draw_stratified_weights(scheme: ResampleScheme, strata: &[usize], rng: &mut StreamRng) -> Result<Vec<f64>> {
    if strata.is_empty() {
        return Err(Error::Empty("strata"));
    }
    let mut out = Vec::with_capacity(strata.iter().sum());
    for &n in strata {
        out.extend(draw_resample_weights(scheme, n, rng)?);
    }
    Ok(out)
}

/// `B` draws of `r_n (theta*_b - theta_hat)` sharing the shape of `theta_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEnsemble {
    bundle: EstimateBundle,
    draws: Vec<Vec<f64>>,
    scheme: ResampleScheme,
    seed_manifest: SeedManifest,
}

impl BootstrapEnsemble {
    /// Assembles an ensemble from precomputed draws.
    pub fn from_draws(
        bundle: EstimateBundle,
        draws: Vec<Vec<f64>>,
        scheme: ResampleScheme,
        seed_manifest: SeedManifest,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("bootstrap draws"));
        }
        let d = bundle.theta_hat().len();
        for draw in &draws {
            check_len(d, draw.len())?;
        }
        Ok(Self {
            bundle,
            draws,
            scheme,
            seed_manifest,
        })
    }

    pub fn bundle(&self) -> &EstimateBundle {
        &self.bundle
    }

    pub fn draws(&self) -> &[Vec<f64>] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn scheme(&self) -> ResampleScheme {
        self.scheme
    }

    pub fn seed_manifest(&self) -> &SeedManifest {
        &self.seed_manifest
    }

    /// Draw `b` in the shape of `theta_hat`.
    pub fn draw_theta(&self, b: usize) -> Result<Theta> {
        self.bundle.theta_hat().with_values(self.draws[b].clone())
    }

    /// Per-component standard deviation across draws.
    pub fn component_sd(&self) -> Vec<f64> {
        let b = self.len() as f64;
        (0..self.bundle.theta_hat().len())
            .map(|j| {
                let m = self.draws.iter().map(|d| d[j]).sum::<f64>() / b;
                (self.draws.iter().map(|d| (d[j] - m).powi(2)).sum::<f64>() / b).sqrt()
            })
            .collect()
    }
}

/// Bootstrap of `estimator(data, weights)` around `bundle.theta_hat()`.
///
/// Draw `b` uses substream `b` of `seed`. A draw whose estimator reports a
/// rank-deficient design is redrawn once from the same stream.
pub fn bootstrap_ensemble<D, E>(
    estimator: E,
    data: &D,
    bundle: &EstimateBundle,
    draws: usize,
    scheme: ResampleScheme,
    seed: &SeedManifest,
) -> Result<BootstrapEnsemble>
where
    D: Sync + ?Sized,
    E: Fn(&D, &[f64]) -> Result<Vec<f64>> + Sync,
{
    bootstrap_ensemble_stratified(estimator, data, &[bundle.sample_size()], bundle, draws, scheme, seed)
}

pub fn bootstrap_ensemble_stratified<D, E>(
    estimator: E,
    data: &D,
    strata: &[usize],
    bundle: &EstimateBundle,
    draws: usize,
    scheme: ResampleScheme,
    seed: &SeedManifest,
) -> Result<BootstrapEnsemble>
where
    D: Sync + ?Sized,
    E: Fn(&D, &[f64]) -> Result<Vec<f64>> + Sync,
{
    if draws == 0 {
        return Err(invalid("draws", "need at least one bootstrap draw"));
    }
    let theta = bundle.theta_hat().values();
    let rate = bundle.rate();
    let out = (0..draws)
        .into_par_iter()
        .map(|b| {
            let tagged = |e: Error| Error::Draw {
                draw: b,
                source: Box::new(e),
            };
            let mut rng = seed.stream(b as u64);
            let w = draw_stratified_weights(scheme, strata, &mut rng).map_err(tagged)?;
            let star = match estimator(data, &w) {
                Err(Error::RankDeficient { .. }) => {
                    log::warn!("bootstrap draw {b}: rank-deficient resample, redrawing once");
                    let w = draw_stratified_weights(scheme, strata, &mut rng).map_err(tagged)?;
                    estimator(data, &w)
                }
                other => other,
            }
            .map_err(tagged)?;
            check_len(theta.len(), star.len()).map_err(tagged)?;
            Ok(star.iter().zip(theta).map(|(s, t)| rate * (s - t)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    BootstrapEnsemble::from_draws(bundle.clone(), out, scheme, seed.clone())
}

/// Which bootstrap law to build from an ensemble.
#[derive(Debug, Clone, Copy)]
pub enum LawMode<'a> {
    /// `r_n (phi(theta*) - phi(theta_hat))`.
    Standard(&'a FunctionalSpec),
    /// `phi'_n(r_n (theta* - theta_hat))`.
    Modified(&'a DerivativeEstimate),
}

pub fn statistic_law(ensemble: &BootstrapEnsemble, mode: LawMode<'_>) -> Result<EmpiricalLaw> {
    let bundle = ensemble.bundle();
    let atoms = match mode {
        LawMode::Standard(spec) => {
            let theta = bundle.theta_hat();
            let rate = bundle.rate();
            let base = eval_functional(spec, theta)?;
            ensemble
                .draws()
                .par_iter()
                .map(|d| {
                    let star: Vec<f64> = theta.values().iter().zip(d).map(|(t, g)| t + g / rate).collect();
                    Ok(rate * (eval_functional(spec, &theta.with_values(star)?)? - base))
                })
                .collect::<Result<Vec<f64>>>()?
        }
        LawMode::Modified(derivative) => {
            check_len(bundle.theta_hat().len(), derivative.dim())?;
            ensemble
                .draws()
                .par_iter()
                .map(|d| derivative.eval(d))
                .collect::<Result<Vec<f64>>>()?
        }
    };
    EmpiricalLaw::new(atoms)
}

/// Settings shared by every bootstrap test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub alpha: f64,
    #[serde(default)]
    pub delta_bump: f64,
    pub draws: usize,
    #[serde(default)]
    pub scheme: ResampleScheme,
}

impl TestSettings {
    pub fn new(alpha: f64, draws: usize) -> Self {
        Self {
            alpha,
            delta_bump: 0.0,
            draws,
            scheme: ResampleScheme::Multinomial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.delta_bump >= 0.0) {
            return Err(invalid("delta_bump", "must be nonnegative"));
        }
        if self.draws == 0 {
            return Err(invalid("draws", "need at least one bootstrap draw"));
        }
        Ok(())
    }
}

/// Test of `H0: phi(theta_0) <= 0` with the derivative-composition
/// bootstrap. `tuning` defaults to [`Tuning::default_for`].
#[allow(clippy::too_many_arguments)]
pub fn run_test<D, E>(
    estimator: E,
    data: &D,
    bundle: &EstimateBundle,
    functional: &FunctionalSpec,
    tuning: Option<Tuning>,
    settings: &TestSettings,
    seed: &SeedManifest,
) -> Result<TestReport>
where
    D: Sync + ?Sized,
    E: Fn(&D, &[f64]) -> Result<Vec<f64>> + Sync,
{
    settings.validate()?;
    let tuning = tuning.unwrap_or_else(|| Tuning::default_for(functional, bundle.sample_size()));
    let derivative = estimate_derivative(functional, bundle, tuning)?;
    let statistic = plug_in_statistic(bundle, functional, 0.0)?;
    let ensemble = bootstrap_ensemble(estimator, data, bundle, settings.draws, settings.scheme, seed)?;
    let law = statistic_law(&ensemble, LawMode::Modified(&derivative))?;
    let mut report = TestReport::from_law(statistic, &law, settings.alpha, settings.delta_bump, seed.clone())?;
    report
        .diagnostics
        .notes
        .push(format!("tuning {tuning:?}; selected {:?}", derivative.selected));
    Ok(report)
}

/// Weighted column means `sum_i w_i x_i / n` of row-major observations.
pub fn weighted_mean(rows: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Empty("observations"));
    }
    check_len(rows.len(), weights.len())?;
    let d = rows[0].len();
    let mut m = vec![0.0; d];
    for (row, w) in rows.iter().zip(weights) {
        check_len(d, row.len())?;
        for (a, x) in m.iter_mut().zip(row) {
            *a += w * x;
        }
    }
    let n = rows.len() as f64;
    Ok(m.into_iter().map(|v| v / n).collect())
}

/// Bundle holding the sample mean of `rows` at rate `sqrt(n)`.
pub fn mean_bundle(rows: &[Vec<f64>]) -> Result<EstimateBundle> {
    let m = weighted_mean(rows, &vec![1.0; rows.len()])?;
    EstimateBundle::new(Theta::vector(m), rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn manifest(seed: u64) -> SeedManifest {
        SeedManifest::new(seed, vec![crate::rng::tag::BOOTSTRAP])
    }

    #[test]
    fn multinomial_counts_sum_to_n() {
        let mut rng = substream(1, &[]);
        assert_eq!(
            draw_resample_weights(ResampleScheme::Multinomial, 1, &mut rng).unwrap(),
            vec![1.0]
        );
        let w = draw_resample_weights(ResampleScheme::Multinomial, 10_000, &mut rng).unwrap();
        assert_eq!(w.iter().sum::<f64>(), 10_000.0);
        assert!(w.iter().all(|c| c.fract() == 0.0 && *c >= 0.0));
        assert!(draw_resample_weights(ResampleScheme::Multinomial, 0, &mut rng).is_err());
    }

    #[test]
    fn exponential_multipliers_have_unit_mean() {
        let n = 10_000;
        let scheme = ResampleScheme::Multiplier {
            law: MultiplierLaw::Exponential,
        };
        let w = draw_resample_weights(scheme, n, &mut substream(2, &[])).unwrap();
        let mean = w.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn constant_data_gives_zero_draws() {
        let rows = vec![vec![2.5]; 40];
        let bundle = mean_bundle(&rows).unwrap();
        let ens = bootstrap_ensemble(
            |d: &[Vec<f64>], w: &[f64]| weighted_mean(d, w),
            rows.as_slice(),
            &bundle,
            30,
            ResampleScheme::Multinomial,
            &manifest(3),
        )
        .unwrap();
        assert!(ens.draws().iter().all(|d| d[0].abs() < 1e-12));
    }

    #[test]
    fn single_draw_keeps_shape() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        let bundle = mean_bundle(&rows).unwrap();
        let ens = bootstrap_ensemble(
            |d: &[Vec<f64>], w: &[f64]| weighted_mean(d, w),
            rows.as_slice(),
            &bundle,
            1,
            ResampleScheme::Multinomial,
            &manifest(4),
        )
        .unwrap();
        assert_eq!(ens.len(), 1);
        assert_eq!(ens.draws()[0].len(), 2);
    }

    #[test]
    fn estimator_failure_carries_draw_index() {
        let rows = vec![vec![1.0]; 5];
        let bundle = mean_bundle(&rows).unwrap();
        let err = bootstrap_ensemble(
            |_: &[Vec<f64>], _: &[f64]| Err(Error::Domain("boom".into())),
            rows.as_slice(),
            &bundle,
            3,
            ResampleScheme::Multinomial,
            &manifest(5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Draw { draw: 0, .. }));
    }

    #[test]
    fn standard_law_of_abs_at_zero_is_abs_of_draws() {
        let bundle = EstimateBundle::new(Theta::scalar(0.0), 100).unwrap();
        let draws = vec![vec![-1.0], vec![0.5], vec![2.0]];
        let ens = BootstrapEnsemble::from_draws(bundle, draws, ResampleScheme::Multinomial, manifest(0)).unwrap();
        let law = statistic_law(&ens, LawMode::Standard(&FunctionalSpec::AbsMean)).unwrap();
        assert_eq!(law.atoms(), &[0.5, 1.0, 2.0]);
        let id = DerivativeEstimate::from_fn(
            1,
            Tuning::Numerical { step: 1.0 },
            1.0,
            crate::functional::LipschitzNorm::Euclidean,
            |h| Ok(h[0]),
        );
        let law = statistic_law(&ens, LawMode::Modified(&id)).unwrap();
        assert_eq!(law.atoms(), &[-1.0, 0.5, 2.0]);
    }

    #[test]
    fn far_negative_max_does_not_reject() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![-5.0 + 0.01 * i as f64, -5.0]).collect();
        let bundle = mean_bundle(&rows).unwrap();
        let spec = FunctionalSpec::MaxCoord { dim: 2 };
        let settings = TestSettings::new(0.05, 50);
        let r = run_test(
            |d: &[Vec<f64>], w: &[f64]| weighted_mean(d, w),
            rows.as_slice(),
            &bundle,
            &spec,
            None,
            &settings,
            &manifest(6),
        )
        .unwrap();
        assert!(!r.reject);
        let huge = TestSettings {
            delta_bump: 1e300,
            ..settings
        };
        let r = run_test(
            |d: &[Vec<f64>], w: &[f64]| weighted_mean(d, w),
            rows.as_slice(),
            &bundle,
            &spec,
            None,
            &huge,
            &manifest(6),
        )
        .unwrap();
        assert!(!r.reject);
    }
}
