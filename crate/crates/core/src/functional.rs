//! Catalog of directionally differentiable functionals, their exact
//! directional derivatives, and data-driven derivative estimators.
//!
//! | functional       | parameter layout                         |
//! |------------------|------------------------------------------|
//! | `AbsMean`        | scalar                                   |
//! | `MaxCoord`       | vector of length `dim`                   |
//! | `StochDomCvM`    | `[F1(u_1..u_m), F2(u_1..u_m)]`           |
//! | `ConvexDistance` | vector or grid function in the set's dim |
//!
//! The stochastic dominance functional is `sum_i w(u_i) (F1 - F2)_+(u_i) c_i`
//! where `c_i` are the quadrature cells of the weight grid.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{tangent_cone, ConvexSet, SupMode, SupSearch, DYKSTRA_TOL};
use crate::error::{check_len, invalid, Error, Result};
use crate::grid::{weighted_dist, weighted_inner, GridFunction, Theta};
use crate::inference::EstimateBundle;
use crate::law::{bl_distance, BlSolver, EmpiricalLaw};
use crate::linalg::{lower_times, psd_cholesky};
use crate::rng::{tag, SeedManifest, StreamRng};

/// Slack treated as binding when evaluating population derivatives.
pub const EXACT_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalSpec {
    AbsMean,
    MaxCoord { dim: usize },
    StochDomCvM { weight: GridFunction },
    ConvexDistance { set: ConvexSet },
}

impl FunctionalSpec {
    pub fn stoch_dom(weight: GridFunction) -> Result<Self> {
        if weight.values().iter().any(|w| *w < 0.0) {
            return Err(invalid("weight", "stochastic dominance weight must be nonnegative"));
        }
        Ok(FunctionalSpec::StochDomCvM { weight })
    }

    /// Length of the parameter vector the functional acts on.
    pub fn dim(&self) -> usize {
        match self {
            FunctionalSpec::AbsMean => 1,
            FunctionalSpec::MaxCoord { dim } => *dim,
            FunctionalSpec::StochDomCvM { weight } => 2 * weight.len(),
            FunctionalSpec::ConvexDistance { set } => set.dim(),
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        check_len(self.dim(), len)
    }

    /// Lipschitz constant of the functional (and of any of its directional
    /// derivatives) with respect to [`Self::lipschitz_norm`].
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            FunctionalSpec::StochDomCvM { weight } => stoch_dom_mass(weight),
            _ => 1.0,
        }
    }

    pub fn lipschitz_norm(&self, weights: &[f64]) -> LipschitzNorm {
        match self {
            FunctionalSpec::AbsMean | FunctionalSpec::MaxCoord { .. } => LipschitzNorm::Euclidean,
            FunctionalSpec::StochDomCvM { weight } => LipschitzNorm::SupSum { block: weight.len() },
            FunctionalSpec::ConvexDistance { .. } => LipschitzNorm::Weighted(weights.to_vec()),
        }
    }
}

fn stoch_dom_mass(weight: &GridFunction) -> f64 {
    weight.values().iter().zip(weight.weights()).map(|(w, c)| w * c).sum()
}

/// Norm in which a derivative estimate's Lipschitz certificate holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LipschitzNorm {
    Euclidean,
    Weighted(Vec<f64>),
    /// Sum of sup norms over consecutive blocks of length `block`.
    SupSum {
        block: usize,
    },
}

impl LipschitzNorm {
    pub fn norm(&self, h: &[f64]) -> f64 {
        match self {
            LipschitzNorm::Euclidean => h.iter().map(|v| v * v).sum::<f64>().sqrt(),
            LipschitzNorm::Weighted(w) => weighted_inner(w, h, h).sqrt(),
            LipschitzNorm::SupSum { block } => h
                .chunks(*block)
                .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .sum(),
        }
    }
}

pub fn eval_functional(spec: &FunctionalSpec, theta: &Theta) -> Result<f64> {
    let v = theta.values();
    spec.check(v.len())?;
    Ok(match spec {
        FunctionalSpec::AbsMean => v[0].abs(),
        FunctionalSpec::MaxCoord { .. } => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        FunctionalSpec::StochDomCvM { weight } => {
            let m = weight.len();
            (0..m)
                .map(|i| weight.values()[i] * (v[i] - v[m + i]).max(0.0) * weight.weights()[i])
                .sum()
        }
        FunctionalSpec::ConvexDistance { set } => set.distance(v, &theta.weights(), DYKSTRA_TOL)?,
    })
}

/// Exact directional derivative of `spec` at `theta0` in direction `h`.
pub fn eval_derivative(spec: &FunctionalSpec, theta0: &Theta, h: &[f64]) -> Result<f64> {
    let t = theta0.values();
    spec.check(t.len())?;
    check_len(t.len(), h.len())?;
    Ok(match spec {
        FunctionalSpec::AbsMean => {
            if t[0] == 0.0 {
                h[0].abs()
            } else {
                t[0].signum() * h[0]
            }
        }
        FunctionalSpec::MaxCoord { .. } => {
            let top = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            t.iter()
                .zip(h)
                .filter(|(a, _)| **a == top)
                .map(|(_, b)| *b)
                .fold(f64::NEG_INFINITY, f64::max)
        }
        FunctionalSpec::StochDomCvM { weight } => {
            let m = weight.len();
            (0..m)
                .map(|i| {
                    let gap = t[i] - t[m + i];
                    let dh = h[i] - h[m + i];
                    let wc = weight.values()[i] * weight.weights()[i];
                    if gap > 0.0 {
                        dh * wc
                    } else if gap == 0.0 {
                        dh.max(0.0) * wc
                    } else {
                        0.0
                    }
                })
                .sum()
        }
        FunctionalSpec::ConvexDistance { set } => {
            let w = theta0.weights();
            let p = set.project(t, &w, DYKSTRA_TOL)?;
            let dist = weighted_dist(&w, t, &p);
            if dist > EXACT_TIE_TOL {
                let resid: Vec<f64> = t.iter().zip(&p).map(|(a, b)| a - b).collect();
                weighted_inner(&w, &resid, h) / dist
            } else {
                tangent_cone(set, &p, EXACT_TIE_TOL)?.distance(h, &w, DYKSTRA_TOL)?
            }
        }
    })
}

/// Tuning constant of a derivative estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tuning {
    /// Near-binding slack `kappa_n` (abs-mean, max-coordinate).
    Selection { kappa: f64 },
    /// Contact-set tolerance `tau_n` (stochastic dominance).
    Contact { tau: f64 },
    /// Neighbourhood radius `epsilon_n` (convex distance).
    Neighborhood { epsilon: f64, mode: SupMode },
    /// Finite-difference step `s_n` (any functional).
    Numerical { step: f64 },
}

impl Tuning {
    /// Rate-based defaults: `n^{-1/3}` for selection, contact and
    /// neighbourhood constants, `n^{-1/4}` for numerical steps.
    pub fn default_for(spec: &FunctionalSpec, n: usize) -> Self {
        let third = (n as f64).powf(-1.0 / 3.0);
        match spec {
            FunctionalSpec::AbsMean | FunctionalSpec::MaxCoord { .. } => Tuning::Selection { kappa: third },
            FunctionalSpec::StochDomCvM { .. } => Tuning::Contact { tau: third },
            FunctionalSpec::ConvexDistance { .. } => Tuning::Neighborhood {
                epsilon: third,
                mode: SupMode::Threshold,
            },
        }
    }

    pub fn numerical_default(n: usize) -> Self {
        Tuning::Numerical {
            step: (n as f64).powf(-0.25),
        }
    }

    fn constant(&self) -> f64 {
        match *self {
            Tuning::Selection { kappa } => kappa,
            Tuning::Contact { tau } => tau,
            Tuning::Neighborhood { epsilon, .. } => epsilon,
            Tuning::Numerical { step } => step,
        }
    }
}

type DerivativeFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;

/// A data-driven estimate `h -> phi'_n(h)` of the directional derivative.
#[derive(Clone)]
pub struct DerivativeEstimate {
    eval: Arc<DerivativeFn>,
    pub tuning: Tuning,
    /// Constraints or coordinates the estimator treats as binding.
    pub selected: Vec<usize>,
    pub lipschitz_bound: f64,
    pub norm: LipschitzNorm,
    dim: usize,
}

impl std::fmt::Debug for DerivativeEstimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DerivativeEstimate")
            .field("tuning", &self.tuning)
            .field("selected", &self.selected)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl DerivativeEstimate {
    /// Wraps an arbitrary closure, e.g. a known linear derivative.
    pub fn from_fn<F>(dim: usize, tuning: Tuning, lipschitz_bound: f64, norm: LipschitzNorm, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(f),
            tuning,
            selected: Vec::new(),
            lipschitz_bound,
            norm,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, h: &[f64]) -> Result<f64> {
        check_len(self.dim, h.len())?;
        (self.eval)(h)
    }
}

pub fn estimate_derivative(
    spec: &FunctionalSpec,
    bundle: &EstimateBundle,
    tuning: Tuning,
) -> Result<DerivativeEstimate> {
    let theta = bundle.theta_hat().clone();
    let t = theta.values().to_vec();
    spec.check(t.len())?;
    let c = tuning.constant();
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("tuning", format!("tuning constant must be positive, got {c}")));
    }
    let weights = theta.weights().into_owned();
    let norm = spec.lipschitz_norm(&weights);
    let lipschitz_bound = spec.lipschitz_constant();
    let dim = t.len();
    let build = |selected: Vec<usize>, f: Arc<DerivativeFn>| DerivativeEstimate {
        eval: f,
        tuning,
        selected,
        lipschitz_bound,
        norm: norm.clone(),
        dim,
    };

    match (spec, tuning) {
        (_, Tuning::Numerical { step }) => {
            let spec = spec.clone();
            let base = eval_functional(&spec, &theta)?;
            let f = move |h: &[f64]| {
                let moved: Vec<f64> = t.iter().zip(h).map(|(a, b)| a + step * b).collect();
                Ok((eval_functional(&spec, &theta.with_values(moved)?)? - base) / step)
            };
            Ok(build(Vec::new(), Arc::new(f)))
        }
        (FunctionalSpec::AbsMean, Tuning::Selection { kappa }) => {
            let est = t[0];
            if est.abs() <= kappa {
                Ok(build(vec![0], Arc::new(|h: &[f64]| Ok(h[0].abs()))))
            } else {
                let s = est.signum();
                Ok(build(Vec::new(), Arc::new(move |h: &[f64]| Ok(s * h[0]))))
            }
        }
        (FunctionalSpec::MaxCoord { .. }, Tuning::Selection { kappa }) => {
            let top = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let selected: Vec<usize> = (0..dim).filter(|&j| t[j] >= top - kappa).collect();
            let sel = selected.clone();
            let f = move |h: &[f64]| Ok(sel.iter().map(|&j| h[j]).fold(f64::NEG_INFINITY, f64::max));
            Ok(build(selected, Arc::new(f)))
        }
        (FunctionalSpec::StochDomCvM { weight }, Tuning::Contact { tau }) => {
            let m = weight.len();
            let wc: Vec<f64> = weight
                .values()
                .iter()
                .zip(weight.weights())
                .map(|(w, c)| w * c)
                .collect();
            let mut contact = Vec::new();
            let mut positive = Vec::new();
            for i in 0..m {
                let gap = t[i] - t[m + i];
                if gap.abs() <= tau {
                    contact.push(i);
                } else if gap > tau {
                    positive.push(i);
                }
            }
            let (c0, cp) = (contact.clone(), positive);
            let f = move |h: &[f64]| {
                let a: f64 = cp.iter().map(|&i| (h[i] - h[m + i]) * wc[i]).sum();
                let b: f64 = c0.iter().map(|&i| (h[i] - h[m + i]).max(0.0) * wc[i]).sum();
                Ok(a + b)
            };
            Ok(build(contact, Arc::new(f)))
        }
        (FunctionalSpec::ConvexDistance { set }, Tuning::Neighborhood { epsilon, mode }) => {
            let center = set.project(&t, &weights, DYKSTRA_TOL)?;
            match mode {
                SupMode::Threshold => {
                    let cone = tangent_cone(set, &center, epsilon)?;
                    let selected = cone.active.clone();
                    let w = weights.clone();
                    let f = move |h: &[f64]| cone.distance(h, &w, DYKSTRA_TOL);
                    Ok(build(selected, Arc::new(f)))
                }
                SupMode::SupSearch => {
                    let set = set.clone();
                    let w = weights.clone();
                    let f = move |h: &[f64]| SupSearch::new(&set, &center, &w, epsilon)?.evaluate(h);
                    Ok(build(Vec::new(), Arc::new(f)))
                }
            }
        }
        (spec, tuning) => Err(invalid(
            "tuning",
            format!("{tuning:?} does not apply to {}", spec_name(spec)),
        )),
    }
}

fn spec_name(spec: &FunctionalSpec) -> &'static str {
    match spec {
        FunctionalSpec::AbsMean => "abs_mean",
        FunctionalSpec::MaxCoord { .. } => "max_coord",
        FunctionalSpec::StochDomCvM { .. } => "stoch_dom_cvm",
        FunctionalSpec::ConvexDistance { .. } => "convex_distance",
    }
}

/// Samples from `N(mean, L L')`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vec<f64>,
    factor: Vec<Vec<f64>>,
}

impl GaussianSampler {
    pub fn new(mean: Vec<f64>, covariance: &[Vec<f64>]) -> Result<Self> {
        check_len(mean.len(), covariance.len())?;
        Ok(Self {
            factor: psd_cholesky(covariance)?,
            mean,
        })
    }

    pub fn centered(covariance: &[Vec<f64>]) -> Result<Self> {
        Self::new(vec![0.0; covariance.len()], covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        lower_times(&self.factor, &z)
            .into_iter()
            .zip(&self.mean)
            .map(|(a, m)| a + m)
            .collect()
    }
}

/// Law of `max(G + lambda) - max(lambda)` with `G ~ N(0, covariance)`.
pub fn local_limit_law_max(
    lambda: &[f64],
    covariance: &[Vec<f64>],
    draws: usize,
    seed: &SeedManifest,
) -> Result<EmpiricalLaw> {
    if draws == 0 {
        return Err(invalid("draws", "need at least one draw"));
    }
    if lambda.is_empty() {
        return Err(Error::Empty("lambda"));
    }
    let sampler = GaussianSampler::centered(covariance)?;
    check_len(sampler.dim(), lambda.len())?;
    let top = lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let atoms: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.stream(r as u64);
            let g = sampler.sample(&mut rng);
            g.iter()
                .zip(lambda)
                .map(|(a, b)| a + b)
                .fold(f64::NEG_INFINITY, f64::max)
                - top
        })
        .collect();
    EmpiricalLaw::new(atoms)
}

/// One row of the invariance probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub shift_id: usize,
    pub bl_distance: f64,
    pub noise_floor: f64,
    /// Distance below the Monte Carlo noise floor `3 / sqrt(R)`.
    pub indistinguishable: bool,
}

/// For each shift `a`, compares the law of `phi'(G + a) - phi'(a)` with the
/// law of `phi'(G) - phi'(0)`. A derivative that is linear on the support
/// of `G` gives identical laws at every shift.
pub fn invariance_probe<D, S>(
    derivative: D,
    sampler: S,
    shifts: &[Vec<f64>],
    draws: usize,
    seed: &SeedManifest,
) -> Result<Vec<ProbeRow>>
where
    D: Fn(&[f64]) -> Result<f64> + Sync,
    S: Fn(&mut StreamRng) -> Vec<f64> + Sync,
{
    if draws == 0 {
        return Err(invalid("draws", "need at least one draw"));
    }
    if shifts.is_empty() {
        return Err(Error::Empty("shifts"));
    }
    let samples: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|r| sampler(&mut seed.stream(r as u64)))
        .collect();
    let dim = samples[0].len();
    let law_at = |shift: &[f64]| -> Result<EmpiricalLaw> {
        check_len(dim, shift.len())?;
        let base = derivative(shift)?;
        let atoms = samples
            .par_iter()
            .map(|g| {
                let moved: Vec<f64> = g.iter().zip(shift).map(|(a, b)| a + b).collect();
                Ok(derivative(&moved)? - base)
            })
            .collect::<Result<Vec<f64>>>()?;
        EmpiricalLaw::new(atoms)
    };
    let reference = law_at(&vec![0.0; dim])?;
    let floor = 3.0 / (draws as f64).sqrt();
    shifts
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let d = bl_distance(&law_at(s)?, &reference, BlSolver::Auto)?;
            Ok(ProbeRow {
                shift_id: k,
                bl_distance: d,
                noise_floor: floor,
                indistinguishable: d < floor,
            })
        })
        .collect()
}

/// Standard limit sampler for the probe: `N(0, covariance)` draws.
pub fn gaussian_limit(covariance: &[Vec<f64>]) -> Result<impl Fn(&mut StreamRng) -> Vec<f64> + Sync> {
    let s = GaussianSampler::centered(covariance)?;
    Ok(move |rng: &mut StreamRng| s.sample(rng))
}

/// Seed path used by limit-law simulations.
pub fn limit_seed(master: u64) -> SeedManifest {
    SeedManifest::new(master, vec![tag::LIMIT])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_theta(v: &[f64]) -> Theta {
        Theta::vector(v.to_vec())
    }

    fn unit_grid(m: usize) -> GridFunction {
        let grid: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        GridFunction::with_uniform_weight(grid, vec![1.0; m], 1.0 / m as f64).unwrap()
    }

    #[test]
    fn evaluates_catalog() {
        assert_eq!(
            eval_functional(&FunctionalSpec::AbsMean, &Theta::scalar(-3.0)).unwrap(),
            3.0
        );
        let max = FunctionalSpec::MaxCoord { dim: 3 };
        assert_eq!(eval_functional(&max, &vec_theta(&[1.0, 4.0, 2.0])).unwrap(), 4.0);
        let sd = FunctionalSpec::stoch_dom(unit_grid(50)).unwrap();
        let mut theta = vec![1.0; 50];
        theta.extend(vec![0.0; 50]);
        assert!((eval_functional(&sd, &vec_theta(&theta)).unwrap() - 1.0).abs() < 1e-12);
        assert!(eval_functional(&max, &vec_theta(&[1.0])).is_err());
    }

    #[test]
    fn exact_derivatives() {
        let d = eval_derivative(&FunctionalSpec::AbsMean, &Theta::scalar(0.0), &[-2.0]).unwrap();
        assert_eq!(d, 2.0);
        let d = eval_derivative(&FunctionalSpec::AbsMean, &Theta::scalar(-1.0), &[-2.0]).unwrap();
        assert_eq!(d, 2.0);
        let max = FunctionalSpec::MaxCoord { dim: 2 };
        assert_eq!(
            eval_derivative(&max, &vec_theta(&[1.0, 1.0]), &[2.0, -1.0]).unwrap(),
            2.0
        );
        assert_eq!(
            eval_derivative(&max, &vec_theta(&[1.0, 0.0]), &[0.0, 5.0]).unwrap(),
            0.0
        );

        let sd = FunctionalSpec::stoch_dom(unit_grid(4)).unwrap();
        let h = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        assert_eq!(eval_derivative(&sd, &vec_theta(&[0.5; 8]), &h).unwrap(), 0.0);
    }

    #[test]
    fn convex_distance_derivative_inside_and_outside() {
        let spec = FunctionalSpec::ConvexDistance {
            set: ConvexSet::orthant(2),
        };
        let d = eval_derivative(&spec, &vec_theta(&[0.0, -1.0]), &[3.0, 4.0]).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        // Outside: gradient of the distance is the unit residual (1, 0).
        let d = eval_derivative(&spec, &vec_theta(&[2.0, -1.0]), &[3.0, 4.0]).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn selection_estimators() {
        let max = FunctionalSpec::MaxCoord { dim: 2 };
        let b = EstimateBundle::new(vec_theta(&[0.0, 0.005]), 100).unwrap();
        let est = estimate_derivative(&max, &b, Tuning::Selection { kappa: 0.1 }).unwrap();
        assert_eq!(est.eval(&[3.0, -1.0]).unwrap(), 3.0);
        assert_eq!(est.selected, vec![0, 1]);

        let b = EstimateBundle::new(vec_theta(&[0.0, 0.5]), 100).unwrap();
        let est = estimate_derivative(&max, &b, Tuning::Selection { kappa: 0.1 }).unwrap();
        assert_eq!(est.eval(&[3.0, -1.0]).unwrap(), -1.0);

        assert!(estimate_derivative(&max, &b, Tuning::Selection { kappa: 0.0 }).is_err());
        assert!(estimate_derivative(&max, &b, Tuning::Contact { tau: 0.1 }).is_err());
    }

    #[test]
    fn numerical_estimator_at_smooth_point() {
        let b = EstimateBundle::new(Theta::scalar(1.0), 10_000).unwrap();
        let est = estimate_derivative(&FunctionalSpec::AbsMean, &b, Tuning::Numerical { step: 0.01 }).unwrap();
        let v = est.eval(&[-2.0]).unwrap();
        assert!((v + 2.0).abs() <= 2.0 * 0.01 * 2.0);
    }

    #[test]
    fn limit_law_rejects_indefinite_covariance() {
        let cov = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(local_limit_law_max(&[0.0, 0.0], &cov, 10, &limit_seed(1)).is_err());
    }

    #[test]
    fn limit_law_equal_shift_invariance() {
        let cov = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let a = local_limit_law_max(&[0.0, 0.0], &cov, 500, &limit_seed(4)).unwrap();
        let b = local_limit_law_max(&[5.0, 5.0], &cov, 500, &limit_seed(4)).unwrap();
        for (x, y) in a.atoms().iter().zip(b.atoms()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
