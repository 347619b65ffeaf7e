//! Estimates, plug-in statistics, test reports and the generic checks built
//! on them: delta-method residuals and confidence sets by test inversion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::functional::{eval_functional, FunctionalSpec};
use crate::grid::Theta;
use crate::law::EmpiricalLaw;
use crate::rng::SeedManifest;

/// Atom range below which a bootstrap law is reported as degenerate.
pub const DEGENERATE_RANGE: f64 = 1e-14;

/// An estimate together with the sample size and the rate `r_n` at which it
/// concentrates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBundle {
    theta_hat: Theta,
    sample_size: usize,
    rate_exponent: f64,
    rate: f64,
}

impl EstimateBundle {
    /// Bundle with the parametric rate `sqrt(n)`.
    pub fn new(theta_hat: Theta, sample_size: usize) -> Result<Self> {
        Self::with_rate_exponent(theta_hat, sample_size, 0.5)
    }

    /// Bundle with rate `n^exponent`.
    pub fn with_rate_exponent(theta_hat: Theta, sample_size: usize, exponent: f64) -> Result<Self> {
        if sample_size == 0 {
            return Err(invalid("sample_size", "must be positive"));
        }
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(invalid("rate_exponent", "must be positive"));
        }
        if theta_hat.is_empty() {
            return Err(Error::Empty("theta_hat"));
        }
        Ok(Self {
            theta_hat,
            sample_size,
            rate_exponent: exponent,
            rate: (sample_size as f64).powf(exponent),
        })
    }

    /// Bundle with an effective sample size, e.g. `n1 n2 / (n1 + n2)` for
    /// two-sample problems.
    pub fn with_effective_size(theta_hat: Theta, sample_size: usize, effective: f64) -> Result<Self> {
        if !(effective > 0.0) {
            return Err(invalid("effective", "must be positive"));
        }
        let mut b = Self::new(theta_hat, sample_size)?;
        b.rate = effective.sqrt();
        Ok(b)
    }

    pub fn theta_hat(&self) -> &Theta {
        &self.theta_hat
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn rate_exponent(&self) -> f64 {
        self.rate_exponent
    }
}

/// `r_n * (phi(theta_hat) - center)`.
pub fn plug_in_statistic(bundle: &EstimateBundle, functional: &FunctionalSpec, center: f64) -> Result<f64> {
    let value = eval_functional(functional, bundle.theta_hat())?;
    Ok(bundle.rate() * (value - center))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// The critical-value law collapsed to a point.
    pub degenerate_law: bool,
    pub law_range: f64,
    pub bootstrap_draws: usize,
    pub notes: Vec<String>,
}

/// Outcome of a one-sided test that rejects for large statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub delta_bump: f64,
    pub reject: bool,
    pub p_value: f64,
    pub seed_manifest: SeedManifest,
    pub diagnostics: Diagnostics,
}

impl TestReport {
    /// Critical value is the `1 - alpha` quantile of `law`; the test rejects
    /// when the statistic exceeds it by more than `delta_bump`.
    pub fn from_law(
        statistic: f64,
        law: &EmpiricalLaw,
        alpha: f64,
        delta_bump: f64,
        seed_manifest: SeedManifest,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !(delta_bump >= 0.0) {
            return Err(invalid("delta_bump", "must be nonnegative"));
        }
        let critical_value = law.quantile(1.0 - alpha)?;
        let range = law.range();
        let mut diagnostics = Diagnostics {
            degenerate_law: range < DEGENERATE_RANGE,
            law_range: range,
            bootstrap_draws: law.len(),
            notes: Vec::new(),
        };
        if diagnostics.degenerate_law {
            diagnostics
                .notes
                .push("derivative estimate annihilated the ensemble".to_string());
        }
        Ok(Self {
            statistic,
            critical_value,
            alpha,
            delta_bump,
            reject: statistic > critical_value + delta_bump,
            p_value: 1.0 - law.cdf(statistic),
            seed_manifest,
            diagnostics,
        })
    }

    pub fn verdict(&self) -> &'static str {
        if self.reject {
            "reject"
        } else {
            "fail to reject"
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is outside (0, 1)")))
    }
}

/// Difference quotients `(phi(theta0 + t h) - phi(theta0)) / t` compared to
/// the claimed derivative at `h`, one residual per step.
pub fn delta_residuals<F, D>(phi: F, derivative: D, theta0: &[f64], h: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
    D: Fn(&[f64]) -> Result<f64>,
{
    if theta0.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: theta0.len(),
            got: h.len(),
        });
    }
    if steps.is_empty() {
        return Err(Error::Empty("steps"));
    }
    if steps.iter().any(|t| !(*t > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("steps", "steps must be positive and strictly decreasing"));
    }
    let base = phi(theta0)?;
    let target = derivative(h)?;
    let mut moved = vec![0.0; theta0.len()];
    steps
        .iter()
        .map(|&t| {
            for ((m, a), b) in moved.iter_mut().zip(theta0).zip(h) {
                *m = a + t * b;
            }
            Ok(((phi(&moved)? - base) / t - target).abs())
        })
        .collect()
}

/// Largest delta-method residual over `steps` (pass the tail of the step
/// sequence you want checked).
pub fn directional_derivative_check<F, D>(
    phi: F,
    derivative: D,
    theta0: &[f64],
    h: &[f64],
    steps: &[f64],
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
    D: Fn(&[f64]) -> Result<f64>,
{
    Ok(delta_residuals(phi, derivative, theta0, h, steps)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Candidate values accepted by an inverted test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub alpha: f64,
    pub accepted: Vec<f64>,
    /// Maximal runs of consecutive accepted grid points, as `(first, last)`.
    pub intervals: Vec<(f64, f64)>,
}

impl ConfidenceSet {
    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|(a, b)| *a <= x && x <= *b)
    }
}

/// Runs `test(c0, alpha)` at every candidate and keeps the non-rejected ones.
pub fn invert_test_for_ci<T>(test: T, candidates: &[f64], alpha: f64) -> Result<ConfidenceSet>
where
    T: Fn(f64, f64) -> Result<TestReport>,
{
    check_alpha(alpha)?;
    if candidates.is_empty() {
        return Err(Error::Empty("candidate grid"));
    }
    if candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("candidates", "grid must be strictly increasing"));
    }
    let mut accepted = Vec::new();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut open = false;
    for &c in candidates {
        let keep = !test(c, alpha)?.reject;
        if keep {
            accepted.push(c);
            match intervals.last_mut() {
                Some(last) if open => last.1 = c,
                _ => intervals.push((c, c)),
            }
        }
        open = keep;
    }
    Ok(ConfidenceSet {
        alpha,
        accepted,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexSet;

    #[test]
    fn plug_in_examples() {
        let b = EstimateBundle::new(Theta::scalar(0.5), 100).unwrap();
        assert_eq!(plug_in_statistic(&b, &FunctionalSpec::AbsMean, 0.0).unwrap(), 5.0);

        let b = EstimateBundle::new(Theta::vector(vec![0.0, 0.0]), 37).unwrap();
        let max = FunctionalSpec::MaxCoord { dim: 2 };
        assert_eq!(plug_in_statistic(&b, &max, 0.0).unwrap(), 0.0);

        let b = EstimateBundle::new(Theta::vector(vec![-1.0, 0.0, 0.0, 4.0]), 50).unwrap();
        let mono = FunctionalSpec::ConvexDistance {
            set: ConvexSet::monotone(4),
        };
        assert_eq!(plug_in_statistic(&b, &mono, 0.0).unwrap(), 0.0);

        let b = EstimateBundle::new(Theta::vector(vec![1.0]), 50).unwrap();
        assert!(plug_in_statistic(&b, &max, 0.0).is_err());
    }

    #[test]
    fn rate_is_declared_at_construction() {
        let b = EstimateBundle::with_rate_exponent(Theta::scalar(1.0), 64, 1.0 / 3.0).unwrap();
        assert!((b.rate() - 4.0).abs() < 1e-12);
        assert!(EstimateBundle::new(Theta::scalar(1.0), 0).is_err());
    }

    #[test]
    fn report_decision_and_p_value() {
        let law = EmpiricalLaw::new((1..=100).map(f64::from).collect()).unwrap();
        let m = SeedManifest::new(1, vec![]);
        let r = TestReport::from_law(95.5, &law, 0.05, 0.0, m.clone()).unwrap();
        assert_eq!(r.critical_value, 95.0);
        assert!(r.reject);
        assert!((r.p_value - 0.05).abs() < 1e-12);
        let r = TestReport::from_law(95.5, &law, 0.05, 1.0, m.clone()).unwrap();
        assert!(!r.reject);
        let r = TestReport::from_law(95.0, &law, 0.05, 0.0, m.clone()).unwrap();
        assert!(!r.reject);
        assert!(TestReport::from_law(1.0, &law, 1.5, 0.0, m).is_err());
    }

    #[test]
    fn degenerate_law_is_flagged() {
        let law = EmpiricalLaw::new(vec![0.0; 10]).unwrap();
        let r = TestReport::from_law(0.0, &law, 0.05, 0.0, SeedManifest::new(0, vec![])).unwrap();
        assert!(r.diagnostics.degenerate_law);
        assert!(!r.reject);
    }

    #[test]
    fn residuals_for_abs_and_max() {
        let abs = |x: &[f64]| Ok(x[0].abs());
        let r = directional_derivative_check(abs, |h: &[f64]| Ok(h[0].abs()), &[0.0], &[-1.0], &[0.1, 0.01]).unwrap();
        assert_eq!(r, 0.0);

        let max = |x: &[f64]| Ok(x[0].max(x[1]));
        let first = |h: &[f64]| Ok(h[0]);
        let r = directional_derivative_check(max, first, &[1.0, 0.0], &[0.0, 5.0], &[0.1, 0.01]).unwrap();
        assert_eq!(r, 0.0);
        let r = directional_derivative_check(max, first, &[1.0, 0.0], &[0.0, 5.0], &[1.0, 0.1]).unwrap();
        assert!(r > 0.0);

        let tie = |h: &[f64]| Ok(h[0].max(h[1]));
        let r = directional_derivative_check(max, tie, &[0.0, 0.0], &[1.0, 2.0], &[1.0, 1e-3]).unwrap();
        assert_eq!(r, 0.0);

        assert!(directional_derivative_check(abs, |_: &[f64]| Ok(0.0), &[0.0], &[1.0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn inversion_with_point_law() {
        let law = EmpiricalLaw::new(vec![0.0]).unwrap();
        let grid = [0.9, 1.0, 1.1];
        let test = |c0: f64, alpha: f64| {
            let stat = 10.0 * (1.0f64 - c0).abs();
            TestReport::from_law(stat, &law, alpha, 0.0, SeedManifest::new(0, vec![]))
        };
        let ci = invert_test_for_ci(test, &grid, 0.05).unwrap();
        assert_eq!(ci.accepted, vec![1.0]);
        assert_eq!(ci.intervals, vec![(1.0, 1.0)]);

        let never = |_c0: f64, alpha: f64| TestReport::from_law(1.0, &law, alpha, 0.0, SeedManifest::new(0, vec![]));
        assert!(invert_test_for_ci(never, &grid, 0.05).unwrap().is_empty());
    }
}
