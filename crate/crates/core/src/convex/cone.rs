use serde::{Deserialize, Serialize};

use super::dykstra::{dykstra, Halfspace, DYKSTRA_MAX_ITER, DYKSTRA_TOL};
use super::pava::{block_spread, pava};
use super::{ConvexSet, MEMBERSHIP_TOL};
use crate::error::{check_len, invalid, Error, Result};
use crate::grid::weighted_dist;
use crate::inference::EstimateBundle;

/// Tangent cone of a convex set, represented by the constraints of the base
/// set that bind at the point of tangency. Only active constraints enter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub base: ConvexSet,
    pub active: Vec<usize>,
}

impl ConeSpec {
    pub fn new(base: ConvexSet, mut active: Vec<usize>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if let Some(&k) = active.last() {
            if k >= base.num_constraints() {
                return Err(invalid(
                    "active",
                    format!("constraint {k} out of range {}", base.num_constraints()),
                ));
            }
        }
        Ok(Self { base, active })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Projection of `h` onto the cone under the norm `sum w_i h_i^2`.
    pub fn project(&self, h: &[f64], weights: &[f64], tol: f64) -> Result<Vec<f64>> {
        check_len(self.dim(), h.len())?;
        check_len(h.len(), weights.len())?;
        let mut out = h.to_vec();
        match &self.base {
            ConvexSet::NonpositiveOrthant { .. } => {
                for &i in &self.active {
                    out[i] = out[i].min(0.0);
                }
            }
            ConvexSet::Box { .. } => {
                let d = h.len();
                let mut lower = vec![false; d];
                let mut upper = vec![false; d];
                for &k in &self.active {
                    if k % 2 == 0 {
                        lower[k / 2] = true;
                    } else {
                        upper[k / 2] = true;
                    }
                }
                for i in 0..d {
                    out[i] = match (lower[i], upper[i]) {
                        (true, true) => 0.0,
                        (true, false) => out[i].max(0.0),
                        (false, true) => out[i].min(0.0),
                        (false, false) => out[i],
                    };
                }
            }
            ConvexSet::MonotoneCone { .. } => {
                for (s, e) in active_chains(&self.active) {
                    let block = pava(&h[s..=e], &weights[s..=e]);
                    out[s..=e].copy_from_slice(&block);
                }
            }
            ConvexSet::HalfspaceIntersection { normals, .. } => {
                let hs: Vec<Halfspace<'_>> = self
                    .active
                    .iter()
                    .map(|&k| Halfspace {
                        normal: &normals[k],
                        offset: 0.0,
                    })
                    .collect();
                out = dykstra(h, &hs, weights, tol, DYKSTRA_MAX_ITER)?;
            }
        }
        Ok(out)
    }

    /// `||h - Proj_T h||`.
    pub fn distance(&self, h: &[f64], weights: &[f64], tol: f64) -> Result<f64> {
        let p = self.project(h, weights, tol)?;
        Ok(weighted_dist(weights, h, &p))
    }
}

/// Maximal runs of consecutive active adjacent pairs, as inclusive knot ranges.
fn active_chains(active: &[usize]) -> Vec<(usize, usize)> {
    let mut chains = Vec::new();
    let mut it = active.iter().copied().peekable();
    while let Some(start) = it.next() {
        let mut end = start;
        while it.peek() == Some(&(end + 1)) {
            end += 1;
            it.next();
        }
        chains.push((start, end + 1));
    }
    chains
}

/// Tangent cone at `point` from the constraints with slack at most `activity_tol`.
pub fn tangent_cone(set: &ConvexSet, point: &[f64], activity_tol: f64) -> Result<ConeSpec> {
    check_len(set.dim(), point.len())?;
    if !(activity_tol >= 0.0) {
        return Err(invalid("activity_tol", "must be nonnegative"));
    }
    let slacks = set.slacks(point);
    let worst = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    if worst < -activity_tol.max(MEMBERSHIP_TOL) {
        return Err(Error::Domain(format!(
            "point violates a constraint by {:e}; project it first",
            -worst
        )));
    }
    let active = slacks
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= activity_tol)
        .map(|(k, _)| k)
        .collect();
    ConeSpec::new(set.clone(), active)
}

pub fn project_tangent(cone: &ConeSpec, h: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    cone.project(h, weights, DYKSTRA_TOL)
}

/// How the supremum over the `epsilon`-neighbourhood of the projection is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SupMode {
    /// Cone generated by the constraints with slack at most `epsilon` at the projection.
    #[default]
    Threshold,
    /// Maximum over the cones generated by every activity pattern reachable
    /// within the `epsilon` ball.
    SupSearch,
}

/// Estimate of the derivative of the distance functional at `h`.
pub fn derivative_sup_estimate(
    set: &ConvexSet,
    bundle: &EstimateBundle,
    epsilon: f64,
    h: &[f64],
    mode: SupMode,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let theta = bundle.theta_hat();
    let weights = theta.weights();
    let center = set.project(theta.values(), &weights, DYKSTRA_TOL)?;
    check_len(set.dim(), h.len())?;
    match mode {
        SupMode::Threshold => {
            let cone = tangent_cone(set, &center, epsilon)?;
            cone.distance(h, &weights, DYKSTRA_TOL)
        }
        SupMode::SupSearch => SupSearch::new(set, &center, &weights, epsilon)?.evaluate(h),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupModeComparison {
    pub threshold: f64,
    pub sup_search: f64,
}

/// Both evaluations side by side; neither dominates the other in general.
pub fn sup_mode_comparison(
    set: &ConvexSet,
    bundle: &EstimateBundle,
    epsilon: f64,
    h: &[f64],
) -> Result<SupModeComparison> {
    Ok(SupModeComparison {
        threshold: derivative_sup_estimate(set, bundle, epsilon, h, SupMode::Threshold)?,
        sup_search: derivative_sup_estimate(set, bundle, epsilon, h, SupMode::SupSearch)?,
    })
}

/// Largest number of halfspace candidates searched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// Precomputed activation costs for the neighbourhood search.
///
/// For the orthant, box and monotone cone the search is exact at any size:
/// activating a pattern costs the squared distance from the center to the
/// face it spans, which is additive over coordinates (orthant, box) or over
/// tied blocks (monotone cone), and the cone distance splits the same way.
/// A Pareto recursion over (cost, value) pairs then enumerates every
/// reachable pattern without listing them one by one.
pub(crate) struct SupSearch<'a> {
    set: &'a ConvexSet,
    center: Vec<f64>,
    weights: Vec<f64>,
    budget: f64,
    epsilon: f64,
}

impl<'a> SupSearch<'a> {
    pub(crate) fn new(set: &'a ConvexSet, center: &[f64], weights: &[f64], epsilon: f64) -> Result<Self> {
        check_len(set.dim(), center.len())?;
        Ok(Self {
            set,
            center: center.to_vec(),
            weights: weights.to_vec(),
            budget: epsilon * epsilon,
            epsilon,
        })
    }

    pub(crate) fn evaluate(&self, h: &[f64]) -> Result<f64> {
        check_len(self.center.len(), h.len())?;
        let w = &self.weights;
        let c = &self.center;
        let d = c.len();
        match self.set {
            ConvexSet::NonpositiveOrthant { .. } => {
                let options = (0..d)
                    .map(|i| {
                        let hp = h[i].max(0.0);
                        vec![(i, w[i] * c[i] * c[i], w[i] * hp * hp)]
                    })
                    .collect();
                Ok(self.pareto(options).sqrt())
            }
            ConvexSet::Box { lower, upper } => {
                let options = (0..d)
                    .map(|i| {
                        let to_l = w[i] * (c[i] - lower[i]).powi(2);
                        let to_u = w[i] * (upper[i] - c[i]).powi(2);
                        let (hn, hp) = (h[i].min(0.0), h[i].max(0.0));
                        let mut o = vec![(i, to_l, w[i] * hn * hn), (i, to_u, w[i] * hp * hp)];
                        if lower[i] == upper[i] {
                            o.push((i, 0.0, w[i] * h[i] * h[i]));
                        }
                        o
                    })
                    .collect();
                Ok(self.pareto(options).sqrt())
            }
            ConvexSet::MonotoneCone { .. } => {
                let mut options: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); d];
                for (e, opts) in options.iter_mut().enumerate() {
                    for s in (0..e).rev() {
                        let (_, cost) = block_spread(&c[s..=e], &w[s..=e]);
                        if cost > self.budget {
                            break;
                        }
                        let fit = pava(&h[s..=e], &w[s..=e]);
                        let value = weighted_dist(&w[s..=e], &h[s..=e], &fit).powi(2);
                        opts.push((s, cost, value));
                    }
                }
                Ok(self.pareto(options).sqrt())
            }
            ConvexSet::HalfspaceIntersection { .. } => self.halfspace_search(h),
        }
    }

    /// `options[e]` lists `(start, cost, value)` blocks ending at `e`; the
    /// empty block `(e, 0, 0)` is implicit. Returns the largest total value
    /// with total cost within budget.
    fn pareto(&self, options: Vec<Vec<(usize, f64, f64)>>) -> f64 {
        let d = options.len();
        // front[k]: nondominated (cost, value) over partitions of 0..k.
        let mut front: Vec<Vec<(f64, f64)>> = Vec::with_capacity(d + 1);
        front.push(vec![(0.0, 0.0)]);
        for (e, opts) in options.iter().enumerate() {
            let mut cand: Vec<(f64, f64)> = front[e].clone();
            for &(s, cost, value) in opts {
                for &(c0, v0) in &front[s] {
                    let c1 = c0 + cost;
                    if c1 <= self.budget {
                        cand.push((c1, v0 + value));
                    }
                }
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
            let mut pruned: Vec<(f64, f64)> = Vec::with_capacity(cand.len());
            for p in cand {
                if pruned.last().is_none_or(|q: &(f64, f64)| p.1 > q.1) {
                    pruned.push(p);
                }
            }
            front.push(pruned);
        }
        front[d].iter().map(|p| p.1).fold(0.0, f64::max)
    }

    fn halfspace_search(&self, h: &[f64]) -> Result<f64> {
        let ConvexSet::HalfspaceIntersection { normals, offsets, .. } = self.set else {
            unreachable!()
        };
        let base = self.set.halfspace_list();
        let face_cost = |subset: &[usize]| -> Result<f64> {
            let neg: Vec<Vec<f64>> = subset
                .iter()
                .map(|&k| normals[k].iter().map(|a| -a).collect())
                .collect();
            let mut hs = base.clone();
            for (n, &k) in neg.iter().zip(subset) {
                hs.push(Halfspace {
                    normal: n,
                    offset: -offsets[k],
                });
            }
            let p = dykstra(&self.center, &hs, &self.weights, DYKSTRA_TOL, DYKSTRA_MAX_ITER)?;
            if hs
                .iter()
                .any(|hh| hh.normal.iter().zip(&p).map(|(a, x)| a * x).sum::<f64>() - hh.offset > 1e-7)
            {
                return Ok(f64::INFINITY);
            }
            Ok(weighted_dist(&self.weights, &self.center, &p))
        };
        let value = |subset: Vec<usize>| -> Result<f64> {
            ConeSpec::new(self.set.clone(), subset)?.distance(h, &self.weights, DYKSTRA_TOL)
        };

        let mut candidates: Vec<(usize, f64)> = Vec::new();
        for k in 0..offsets.len() {
            let cost = face_cost(&[k])?;
            if cost <= self.epsilon {
                candidates.push((k, cost));
            }
        }
        if candidates.len() <= EXHAUSTIVE_LIMIT {
            let mut best = 0.0f64;
            for mask in 0u32..(1 << candidates.len()) {
                let subset: Vec<usize> = candidates
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| mask & (1 << j) != 0)
                    .map(|(_, c)| c.0)
                    .collect();
                if subset.len() > 1 && face_cost(&subset)? > self.epsilon {
                    continue;
                }
                best = best.max(value(subset)?);
            }
            Ok(best)
        } else {
            candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut chosen: Vec<usize> = Vec::new();
            for (k, _) in candidates {
                chosen.push(k);
                if face_cost(&chosen)? > self.epsilon {
                    chosen.pop();
                }
            }
            value(chosen)
        }
    }
}
