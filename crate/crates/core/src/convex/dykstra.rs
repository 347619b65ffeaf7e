//! Dykstra's alternating projections onto an intersection of halfspaces
//! under a diagonally weighted norm.

use crate::error::{Error, Result};

pub const DYKSTRA_MAX_ITER: usize = 100_000;
pub const DYKSTRA_TOL: f64 = 1e-10;

/// Halfspace `{x : a'x <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace<'a> {
    pub normal: &'a [f64],
    pub offset: f64,
}

fn project_halfspace(x: &mut [f64], h: &Halfspace<'_>, weights: &[f64]) {
    let excess: f64 = h.normal.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() - h.offset;
    if excess <= 0.0 {
        return;
    }
    let scale: f64 = h.normal.iter().zip(weights).map(|(a, w)| a * a / w).sum();
    if scale == 0.0 {
        return;
    }
    let step = excess / scale;
    for ((xi, a), w) in x.iter_mut().zip(h.normal).zip(weights) {
        *xi -= step * a / w;
    }
}

/// Projects `point` onto the intersection of `halfspaces` in the norm
/// `sum w_i x_i^2`. Stops when one full sweep moves the iterate by less
/// than `tol`.
pub fn dykstra(
    point: &[f64],
    halfspaces: &[Halfspace<'_>],
    weights: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let d = point.len();
    let mut x = point.to_vec();
    if halfspaces.is_empty() {
        return Ok(x);
    }
    let mut incr = vec![vec![0.0; d]; halfspaces.len()];
    let mut y = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let start = x.clone();
        for (h, p) in halfspaces.iter().zip(incr.iter_mut()) {
            for ((yi, xi), pi) in y.iter_mut().zip(&x).zip(p.iter()) {
                *yi = xi + pi;
            }
            let before = y.clone();
            project_halfspace(&mut y, h, weights);
            for ((pi, b), yi) in p.iter_mut().zip(&before).zip(&y) {
                *pi = b - yi;
            }
            x.copy_from_slice(&y);
        }
        residual = crate::grid::weighted_dist(weights, &x, &start);
        if residual < tol {
            return Ok(x);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
        last_iterate: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_of_two_halfspaces() {
        let a1 = [1.0, 0.0];
        let a2 = [0.0, 1.0];
        let hs = [
            Halfspace {
                normal: &a1,
                offset: 0.0,
            },
            Halfspace {
                normal: &a2,
                offset: 0.0,
            },
        ];
        let p = dykstra(&[1.0, 2.0], &hs, &[1.0, 1.0], 1e-12, 1000).unwrap();
        assert!(p[0].abs() < 1e-10 && p[1].abs() < 1e-10);
    }

    #[test]
    fn oblique_pair_differs_from_plain_alternation() {
        // x + y <= 0 and x - y <= 0 from (2, 0): projection is the origin.
        let a1 = [1.0, 1.0];
        let a2 = [1.0, -1.0];
        let hs = [
            Halfspace {
                normal: &a1,
                offset: 0.0,
            },
            Halfspace {
                normal: &a2,
                offset: 0.0,
            },
        ];
        let p = dykstra(&[2.0, 0.0], &hs, &[1.0, 1.0], 1e-12, 10_000).unwrap();
        assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn reports_last_iterate_on_cap() {
        let a1 = [1.0, 1.0];
        let a2 = [1.0, -1.0];
        let hs = [
            Halfspace {
                normal: &a1,
                offset: 0.0,
            },
            Halfspace {
                normal: &a2,
                offset: 0.0,
            },
        ];
        match dykstra(&[2.0, 0.3], &hs, &[1.0, 1.0], 0.0, 3) {
            Err(Error::NotConverged { last_iterate, .. }) => assert_eq!(last_iterate.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
