use serde::{Deserialize, Serialize};

use super::{distance_statistic, ConvexSet, SupMode};
use crate::bootstrap::{bootstrap_ensemble, statistic_law, BootstrapEnsemble, LawMode, TestSettings};
use crate::error::{invalid, Result};
use crate::functional::{estimate_derivative, FunctionalSpec, Tuning};
use crate::inference::{EstimateBundle, TestReport};
use crate::law::EmpiricalLaw;
use crate::rng::SeedManifest;

/// Neighbourhood radius `epsilon_n = c * n^(-kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRule {
    pub c: f64,
    pub kappa: f64,
}

impl EpsilonRule {
    pub fn new(c: f64, kappa: f64) -> Result<Self> {
        let rule = Self { c, kappa };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", "must be positive"));
        }
        if !(self.kappa > 0.0 && self.kappa < 0.5) {
            return Err(invalid(
                "kappa",
                "must lie in (0, 1/2) so that epsilon_n sqrt(n) diverges",
            ));
        }
        Ok(())
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        self.c * (n as f64).powf(-self.kappa)
    }
}

/// A projection test: `H0: theta_0 in set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionProblem {
    pub set: ConvexSet,
    pub epsilon: EpsilonRule,
    #[serde(default)]
    pub mode: SupMode,
    pub settings: TestSettings,
}

/// Law of the neighbourhood derivative estimate applied to every draw.
pub fn projection_law(
    ensemble: &BootstrapEnsemble,
    set: &ConvexSet,
    epsilon: EpsilonRule,
    mode: SupMode,
) -> Result<EmpiricalLaw> {
    epsilon.validate()?;
    let bundle = ensemble.bundle();
    let spec = FunctionalSpec::ConvexDistance { set: set.clone() };
    let tuning = Tuning::Neighborhood {
        epsilon: epsilon.epsilon(bundle.sample_size()),
        mode,
    };
    let derivative = estimate_derivative(&spec, bundle, tuning)?;
    statistic_law(ensemble, LawMode::Modified(&derivative))
}

/// Distance statistic with critical values from a precomputed ensemble.
pub fn projection_test_from_ensemble(
    ensemble: &BootstrapEnsemble,
    set: &ConvexSet,
    epsilon: EpsilonRule,
    mode: SupMode,
    alpha: f64,
    delta_bump: f64,
) -> Result<TestReport> {
    let statistic = distance_statistic(ensemble.bundle(), set)?;
    let law = projection_law(ensemble, set, epsilon, mode)?;
    TestReport::from_law(statistic, &law, alpha, delta_bump, ensemble.seed_manifest().clone())
}

pub fn run_projection_test<D, E>(
    estimator: E,
    data: &D,
    bundle: &EstimateBundle,
    problem: &ProjectionProblem,
    seed: &SeedManifest,
) -> Result<TestReport>
where
    D: Sync + ?Sized,
    E: Fn(&D, &[f64]) -> Result<Vec<f64>> + Sync,
{
    problem.settings.validate()?;
    problem.set.validate()?;
    let s = &problem.settings;
    let ensemble = bootstrap_ensemble(estimator, data, bundle, s.draws, s.scheme, seed)?;
    projection_test_from_ensemble(
        &ensemble,
        &problem.set,
        problem.epsilon,
        problem.mode,
        s.alpha,
        s.delta_bump,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::{mean_bundle, weighted_mean};

    #[test]
    fn epsilon_decays() {
        let r = EpsilonRule::new(1.0, 1.0 / 3.0).unwrap();
        assert!((r.epsilon(1000) - 0.1).abs() < 1e-12);
        assert!(EpsilonRule::new(0.0, 0.25).is_err());
        assert!(EpsilonRule::new(1.0, 0.5).is_err());
    }

    #[test]
    fn interior_point_does_not_reject() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![-3.0 + 1e-3 * (i % 7) as f64, -2.0 - 1e-3 * (i % 5) as f64])
            .collect();
        let bundle = mean_bundle(&rows).unwrap();
        let problem = ProjectionProblem {
            set: ConvexSet::orthant(2),
            epsilon: EpsilonRule::new(1.0, 1.0 / 3.0).unwrap(),
            mode: SupMode::Threshold,
            settings: TestSettings::new(0.05, 100),
        };
        let r = run_projection_test(
            |d: &[Vec<f64>], w: &[f64]| weighted_mean(d, w),
            rows.as_slice(),
            &bundle,
            &problem,
            &SeedManifest::new(9, vec![]),
        )
        .unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        assert!(r.diagnostics.degenerate_law);
    }
}
