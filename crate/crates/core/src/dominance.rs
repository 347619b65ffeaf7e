//! Two-sample first-order stochastic dominance.
//!
//! The parameter stacks the two empirical cdfs on a common grid,
//! `theta = (F1(u_1..u_m), F2(u_1..u_m))`, and the null `F1 <= F2`
//! (sample one dominates) is tested with the weighted positive-part
//! functional. Bootstrap draws resample each sample separately.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_ensemble_stratified, statistic_law, LawMode, ResampleScheme, TestSettings};
use crate::error::{invalid, Error, Result};
use crate::functional::{estimate_derivative, FunctionalSpec, Tuning};
use crate::grid::{GridFunction, Theta};
use crate::inference::{plug_in_statistic, EstimateBundle, TestReport};
use crate::rng::SeedManifest;

/// Samples one and two, stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSample {
    values: Vec<f64>,
    n1: usize,
}

impl TwoSample {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Self> {
        if first.is_empty() || second.is_empty() {
            return Err(Error::Empty("dominance sample"));
        }
        if first.iter().chain(&second).any(|v| !v.is_finite()) {
            return Err(invalid("sample", "values must be finite"));
        }
        let n1 = first.len();
        let mut values = first;
        values.extend(second);
        Ok(Self { values, n1 })
    }

    pub fn sizes(&self) -> [usize; 2] {
        [self.n1, self.values.len() - self.n1]
    }

    pub fn first(&self) -> &[f64] {
        &self.values[..self.n1]
    }

    pub fn second(&self) -> &[f64] {
        &self.values[self.n1..]
    }

    /// `m` equally spaced knots spanning the pooled sample.
    pub fn pooled_grid(&self, m: usize) -> Result<Vec<f64>> {
        if m < 2 {
            return Err(invalid("grid_points", "need at least two knots"));
        }
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(invalid("sample", "pooled sample is constant"));
        }
        Ok((0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect())
    }

    /// Weighted cdfs of both samples at `grid`; weights are normalised
    /// within each sample.
    pub fn cdfs(&self, grid: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.values.len(), weights.len())?;
        let mut out = Vec::with_capacity(2 * grid.len());
        for (vals, w) in [
            (self.first(), &weights[..self.n1]),
            (self.second(), &weights[self.n1..]),
        ] {
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(invalid("weights", "a sample received zero total weight"));
            }
            for &u in grid {
                let mass: f64 = vals.iter().zip(w).filter(|(v, _)| **v <= u).map(|(_, w)| w).sum();
                out.push(mass / total);
            }
        }
        Ok(out)
    }
}

/// Settings of a dominance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceConfig {
    pub alpha: f64,
    #[serde(default)]
    pub delta_bump: f64,
    pub draws: usize,
    #[serde(default)]
    pub scheme: ResampleScheme,
    /// Number of grid knots spanning the pooled sample.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Contact-set tolerance; `n^{-1/3}` of the effective size when absent.
    #[serde(default)]
    pub tau: Option<f64>,
}

impl DominanceConfig {
    pub fn new(alpha: f64, draws: usize) -> Self {
        Self {
            alpha,
            delta_bump: 0.0,
            draws,
            scheme: ResampleScheme::Multinomial,
            grid_points: default_grid_points(),
            tau: None,
        }
    }

    pub fn settings(&self) -> TestSettings {
        TestSettings {
            alpha: self.alpha,
            delta_bump: self.delta_bump,
            draws: self.draws,
            scheme: self.scheme,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        if self.grid_points < 2 {
            return Err(invalid("grid_points", "need at least two knots"));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("tau", "must be positive"));
            }
        }
        Ok(())
    }
}

fn default_grid_points() -> usize {
    100
}

/// `H0: sample one first-order stochastically dominates sample two`, with
/// a unit weight function and Riemann quadrature on the pooled grid.
pub fn dominance_test(data: &TwoSample, config: &DominanceConfig, seed: &SeedManifest) -> Result<TestReport> {
    config.validate()?;
    let grid = data.pooled_grid(config.grid_points)?;
    let [n1, n2] = data.sizes();
    let effective = (n1 * n2) as f64 / (n1 + n2) as f64;
    let weight = GridFunction::with_riemann_weights(grid.clone(), vec![1.0; grid.len()])?;
    let spec = FunctionalSpec::stoch_dom(weight)?;
    let theta = data.cdfs(&grid, &vec![1.0; n1 + n2])?;
    let bundle = EstimateBundle::with_effective_size(Theta::vector(theta), n1 + n2, effective)?;
    let tuning = match config.tau {
        Some(tau) => Tuning::Contact { tau },
        None => Tuning::Contact {
            tau: effective.powf(-1.0 / 3.0),
        },
    };
    let derivative = estimate_derivative(&spec, &bundle, tuning)?;
    let statistic = plug_in_statistic(&bundle, &spec, 0.0)?;
    let s = &config.settings();
    let ensemble = bootstrap_ensemble_stratified(
        |d: &TwoSample, w: &[f64]| d.cdfs(&grid, w),
        data,
        &[n1, n2],
        &bundle,
        s.draws,
        s.scheme,
        seed,
    )?;
    let law = statistic_law(&ensemble, LawMode::Modified(&derivative))?;
    let mut report = TestReport::from_law(statistic, &law, s.alpha, s.delta_bump, seed.clone())?;
    report.diagnostics.notes.push(format!(
        "contact tolerance {:?}; contact knots {}",
        tuning,
        derivative.selected.len()
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdfs_stack_both_samples() {
        let d = TwoSample::new(vec![0.0, 1.0], vec![0.5, 1.5, 2.5]).unwrap();
        let f = d.cdfs(&[0.0, 1.0, 2.0], &[1.0; 5]).unwrap();
        let expect = [0.5, 1.0, 1.0, 0.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shifted_sample_dominates() {
        let first: Vec<f64> = (0..300).map(|i| 1.0 + i as f64 / 300.0).collect();
        let second: Vec<f64> = (0..300).map(|i| i as f64 / 300.0).collect();
        let d = TwoSample::new(first, second).unwrap();
        let config = DominanceConfig {
            grid_points: 50,
            ..DominanceConfig::new(0.05, 200)
        };
        let r = dominance_test(&d, &config, &SeedManifest::new(4, vec![])).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);

        let flipped = TwoSample::new(d.second().to_vec(), d.first().to_vec()).unwrap();
        let r = dominance_test(&flipped, &config, &SeedManifest::new(4, vec![])).unwrap();
        assert!(r.reject);
    }
}
