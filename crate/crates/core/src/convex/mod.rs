//! Closed convex sets, metric projections, tangent cones and the distance
//! test built on them.

mod cone;
mod dykstra;
mod pava;
mod pipeline;

pub(crate) use cone::SupSearch;
pub use cone::{
    derivative_sup_estimate, project_tangent, sup_mode_comparison, tangent_cone, ConeSpec, SupMode, SupModeComparison,
};
pub use dykstra::{dykstra, Halfspace, DYKSTRA_MAX_ITER, DYKSTRA_TOL};
pub use pava::pava;
pub use pipeline::{
    projection_law, projection_test_from_ensemble, run_projection_test, EpsilonRule, ProjectionProblem,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::grid::{weighted_dist, Theta};
use crate::inference::EstimateBundle;

/// Slack below which a constraint counts as violated by a point that is
/// supposed to lie in the set.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

/// A known closed convex set in the parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConvexSet {
    /// `{x : x_i <= 0 for all i}`.
    NonpositiveOrthant { dim: usize },
    /// `{x : lower_i <= x_i <= upper_i}`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Nondecreasing sequences on a grid of `dim` knots.
    MonotoneCone { dim: usize },
    /// `{x : a_i'x <= b_i}`, certified nonempty by `feasible_point`.
    HalfspaceIntersection {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        feasible_point: Vec<f64>,
    },
}

impl ConvexSet {
    pub fn orthant(dim: usize) -> Self {
        ConvexSet::NonpositiveOrthant { dim }
    }

    pub fn monotone(dim: usize) -> Self {
        ConvexSet::MonotoneCone { dim }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn halfspaces(normals: Vec<Vec<f64>>, offsets: Vec<f64>, feasible_point: Vec<f64>) -> Result<Self> {
        let set = ConvexSet::HalfspaceIntersection {
            normals,
            offsets,
            feasible_point,
        };
        set.validate()?;
        Ok(set)
    }

    /// Checks the construction invariants; deserialized sets should be
    /// validated before use.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexSet::NonpositiveOrthant { dim } | ConvexSet::MonotoneCone { dim } => {
                if *dim == 0 {
                    return Err(invalid("dim", "dimension must be positive"));
                }
            }
            ConvexSet::Box { lower, upper } => {
                if lower.is_empty() {
                    return Err(invalid("lower", "dimension must be positive"));
                }
                check_len(lower.len(), upper.len())?;
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(invalid("upper", "box needs lower <= upper"));
                }
            }
            ConvexSet::HalfspaceIntersection {
                normals,
                offsets,
                feasible_point,
            } => {
                let d = feasible_point.len();
                if d == 0 {
                    return Err(invalid("feasible_point", "dimension must be positive"));
                }
                check_len(normals.len(), offsets.len())?;
                for a in normals {
                    check_len(d, a.len())?;
                }
                if self.slacks(feasible_point).iter().any(|s| *s < -MEMBERSHIP_TOL) {
                    return Err(invalid("feasible_point", "certificate violates a halfspace"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::NonpositiveOrthant { dim } | ConvexSet::MonotoneCone { dim } => *dim,
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::HalfspaceIntersection { feasible_point, .. } => feasible_point.len(),
        }
    }

    pub fn num_constraints(&self) -> usize {
        match self {
            ConvexSet::NonpositiveOrthant { dim } => *dim,
            ConvexSet::Box { lower, .. } => 2 * lower.len(),
            ConvexSet::MonotoneCone { dim } => dim.saturating_sub(1),
            ConvexSet::HalfspaceIntersection { offsets, .. } => offsets.len(),
        }
    }

    /// True for sets that are cones with vertex at the origin.
    pub fn is_cone(&self) -> bool {
        match self {
            ConvexSet::NonpositiveOrthant { .. } | ConvexSet::MonotoneCone { .. } => true,
            ConvexSet::Box { lower, upper } => lower.iter().zip(upper).all(|(l, u)| *l == 0.0 && *u == 0.0),
            ConvexSet::HalfspaceIntersection { offsets, .. } => offsets.iter().all(|b| *b == 0.0),
        }
    }

    /// Slack of each constraint at `x`; negative means violated.
    ///
    /// Constraint indices: orthant coordinate `i`; box `2i` (lower) and
    /// `2i + 1` (upper); monotone pair `(i, i + 1)` as `i`; halfspace `i`.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ConvexSet::NonpositiveOrthant { .. } => x.iter().map(|v| -v).collect(),
            ConvexSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .flat_map(|(v, (l, u))| [v - l, u - v])
                .collect(),
            ConvexSet::MonotoneCone { .. } => x.windows(2).map(|p| p[1] - p[0]).collect(),
            ConvexSet::HalfspaceIntersection { normals, offsets, .. } => normals
                .iter()
                .zip(offsets)
                .map(|(a, b)| b - a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>())
                .collect(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.slacks(x).iter().all(|s| *s >= -tol)
    }

    pub(crate) fn halfspace_list(&self) -> Vec<Halfspace<'_>> {
        match self {
            ConvexSet::HalfspaceIntersection { normals, offsets, .. } => normals
                .iter()
                .zip(offsets)
                .map(|(a, b)| Halfspace { normal: a, offset: *b })
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Metric projection of `x` under the norm `sum w_i x_i^2`.
    pub fn project(&self, x: &[f64], weights: &[f64], tol: f64) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        check_len(x.len(), weights.len())?;
        if !(tol > 0.0) {
            return Err(invalid("tol", "tolerance must be positive"));
        }
        Ok(match self {
            ConvexSet::NonpositiveOrthant { .. } => x.iter().map(|v| v.min(0.0)).collect(),
            ConvexSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| v.clamp(*l, *u))
                .collect(),
            ConvexSet::MonotoneCone { .. } => pava(x, weights),
            ConvexSet::HalfspaceIntersection { .. } => {
                if self.contains(x, 0.0) {
                    x.to_vec()
                } else {
                    dykstra(x, &self.halfspace_list(), weights, tol, DYKSTRA_MAX_ITER)?
                }
            }
        })
    }

    pub fn project_theta(&self, theta: &Theta, tol: f64) -> Result<Theta> {
        let p = self.project(theta.values(), &theta.weights(), tol)?;
        theta.with_values(p)
    }

    /// Weighted distance from `x` to the set.
    pub fn distance(&self, x: &[f64], weights: &[f64], tol: f64) -> Result<f64> {
        let p = self.project(x, weights, tol)?;
        Ok(weighted_dist(weights, x, &p))
    }
}

/// `r_n * ||theta_hat - Proj(theta_hat)||`.
pub fn distance_statistic(bundle: &EstimateBundle, set: &ConvexSet) -> Result<f64> {
    let theta = bundle.theta_hat();
    if theta.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: theta.len(),
        });
    }
    let d = set.distance(theta.values(), &theta.weights(), DYKSTRA_TOL)?;
    Ok(bundle.rate() * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthant_clips_positive_coordinates() {
        let set = ConvexSet::orthant(2);
        assert_eq!(set.project(&[1.0, -2.0], &[1.0, 1.0], 1e-10).unwrap(), vec![0.0, -2.0]);
    }

    #[test]
    fn box_clamps() {
        let set = ConvexSet::boxed(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(set.project(&[2.0, -3.0], &[1.0, 1.0], 1e-10).unwrap(), vec![1.0, -1.0]);
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn halfspace_certificate_is_checked() {
        assert!(ConvexSet::halfspaces(vec![vec![1.0, 0.0]], vec![0.0], vec![1.0, 0.0]).is_err());
        let set = ConvexSet::halfspaces(vec![vec![1.0, 1.0]], vec![1.0], vec![0.0, 0.0]).unwrap();
        let p = set.project(&[1.0, 1.0], &[1.0, 1.0], 1e-12).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn points_in_the_set_are_fixed() {
        let w = [1.0, 2.0, 0.5];
        let sets = [
            ConvexSet::orthant(3),
            ConvexSet::monotone(3),
            ConvexSet::boxed(vec![-5.0; 3], vec![5.0; 3]).unwrap(),
            ConvexSet::halfspaces(vec![vec![1.0, 1.0, 1.0]], vec![0.0], vec![0.0; 3]).unwrap(),
        ];
        let x = [-3.0, -1.0, -0.5];
        for s in &sets {
            let p = s.project(&x, &w, 1e-10).unwrap();
            assert_eq!(p, x.to_vec(), "{s:?}");
            assert_eq!(s.distance(&x, &w, 1e-10).unwrap(), 0.0);
        }
    }

    #[test]
    fn distance_statistic_examples() {
        let b = EstimateBundle::new(Theta::vector(vec![0.3, -1.0]), 100).unwrap();
        let s = distance_statistic(&b, &ConvexSet::orthant(2)).unwrap();
        assert!((s - 3.0).abs() < 1e-12);

        let b = EstimateBundle::new(Theta::vector(vec![3.0, 1.0, 2.0]), 25).unwrap();
        let s = distance_statistic(&b, &ConvexSet::monotone(3)).unwrap();
        assert!((s - 5.0 * 2f64.sqrt()).abs() < 1e-12);

        let b = EstimateBundle::new(Theta::vector(vec![-1.0, 0.0, 2.0]), 25).unwrap();
        assert_eq!(distance_statistic(&b, &ConvexSet::monotone(3)).unwrap(), 0.0);

        let b = EstimateBundle::new(Theta::vector(vec![1.0]), 25).unwrap();
        assert!(distance_statistic(&b, &ConvexSet::monotone(3)).is_err());
    }
}
