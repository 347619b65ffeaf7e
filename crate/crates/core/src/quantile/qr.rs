//! Weighted linear quantile regression.
//!
//! The primary solver walks the vertices of the check-function LP in
//! interpolation form: a vertex is a set of `p` observations fitted
//! exactly, and each pivot moves along the edge that frees one of them,
//! with an exact line search over the piecewise-linear objective. Every
//! pivot strictly decreases the objective, so the walk terminates. The
//! dense tableau simplex solves the same LP directly and serves as the
//! fallback and as an oracle in tests.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::column_rank;
use crate::lp::{LinearProgram, Relation};

/// Observations `(y_i, x_i)` with row-major regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrData {
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
}

impl QrData {
    pub fn new(y: Vec<f64>, x: Vec<f64>, p: usize) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Empty("observations"));
        }
        if p == 0 {
            return Err(invalid("p", "need at least one regressor"));
        }
        check_len(y.len() * p, x.len())?;
        if y.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(invalid("data", "non-finite value"));
        }
        Ok(Self { y, x, p })
    }

    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        for r in rows {
            check_len(p, r.len())?;
        }
        Self::new(y, rows.concat(), p)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rank(&self) -> usize {
        column_rank(&self.x, self.n(), self.p)
    }

    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.y[i] - dot(self.row(i), beta)).collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Check function `rho_tau(u) = (tau - 1{u <= 0}) u`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u > 0.0 {
        tau * u
    } else {
        (tau - 1.0) * u
    }
}

pub fn qr_objective(data: &QrData, weights: &[f64], tau: f64, beta: &[f64]) -> f64 {
    data.residuals(beta)
        .iter()
        .zip(weights)
        .map(|(r, w)| w * check_loss(*r, tau))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrSolution {
    pub beta: Vec<f64>,
    pub objective: f64,
    /// Observations fitted exactly at the returned vertex.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

/// Subgradient counts at a fit. With an intercept column, optimality
/// implies `negative <= tau * total <= negative + zero`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub tau: f64,
    pub negative: f64,
    pub zero: f64,
    pub total: f64,
}

impl Certificate {
    pub fn at(data: &QrData, weights: &[f64], tau: f64, beta: &[f64], tol: f64) -> Self {
        let mut c = Certificate {
            tau,
            negative: 0.0,
            zero: 0.0,
            total: 0.0,
        };
        for (r, w) in data.residuals(beta).iter().zip(weights) {
            c.total += w;
            if r.abs() <= tol {
                c.zero += w;
            } else if *r < 0.0 {
                c.negative += w;
            }
        }
        c
    }

    pub fn holds(&self) -> bool {
        let target = self.tau * self.total;
        let slack = 1e-9 * self.total.max(1.0);
        self.negative <= target + slack && self.negative + self.zero >= target - slack
    }

    /// The count band `[n tau - p, n tau + p]` for unit weights.
    pub fn within_band(&self, p: usize) -> bool {
        let target = self.tau * self.total;
        (self.negative - target).abs() <= p as f64 + 1e-9
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(invalid("tau", format!("{tau} is outside (0, 1)")))
    }
}

fn check_weights(n: usize, weights: &[f64]) -> Result<()> {
    check_len(n, weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(invalid("weights", "must be finite and nonnegative"));
    }
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(Error::Empty("positively weighted observations"));
    }
    Ok(())
}

/// In-place Gauss-Jordan inverse of a `p x p` row-major matrix. Returns
/// false if the matrix is numerically singular.
fn invert_into(a: &mut [f64], inv: &mut [f64], p: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return false;
    }
    inv.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..p {
        inv[i * p + i] = 1.0;
    }
    for col in 0..p {
        let mut piv = col;
        for r in col + 1..p {
            if a[r * p + col].abs() > a[piv * p + col].abs() {
                piv = r;
            }
        }
        if a[piv * p + col].abs() <= 1e-12 * scale {
            return false;
        }
        if piv != col {
            for k in 0..p {
                a.swap(col * p + k, piv * p + k);
                inv.swap(col * p + k, piv * p + k);
            }
        }
        let d = 1.0 / a[col * p + col];
        for k in 0..p {
            a[col * p + k] *= d;
            inv[col * p + k] *= d;
        }
        for r in 0..p {
            if r != col {
                let f = a[r * p + col];
                if f != 0.0 {
                    for k in 0..p {
                        a[r * p + k] -= f * a[col * p + k];
                        inv[r * p + k] -= f * inv[col * p + k];
                    }
                }
            }
        }
    }
    true
}

/// Positively weighted rows (plus any rows named by a warm start) in
/// contiguous storage, with `keep[j]` the original index of row `j`.
struct Walk {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    p: usize,
    keep: Vec<usize>,
    local: Vec<usize>,
}

struct Vertex {
    beta: Vec<f64>,
    basis: Vec<usize>,
    objective: f64,
    iterations: usize,
}

impl Walk {
    fn new(data: &QrData, weights: &[f64], extra: &[usize]) -> Self {
        let n = data.n();
        let mut keep: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
        keep.extend(extra.iter().copied().filter(|&b| b < n && weights[b] == 0.0));
        keep.sort_unstable();
        keep.dedup();
        let mut local = vec![usize::MAX; n];
        for (j, &i) in keep.iter().enumerate() {
            local[i] = j;
        }
        Self {
            x: keep.iter().flat_map(|&i| data.row(i).iter().copied()).collect(),
            y: keep.iter().map(|&i| data.y[i]).collect(),
            w: keep.iter().map(|&i| weights[i]).collect(),
            p: data.p(),
            keep,
            local,
        }
    }

    fn to_local(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter()
            .filter_map(|&b| self.local.get(b).copied().filter(|&j| j != usize::MAX))
            .collect()
    }

    fn solve(&self, tau: f64, warm_local: &[usize]) -> Result<Vertex> {
        let basis = self.initial_basis(warm_local)?;
        self.run(tau, basis, 50 * self.m() + 1000)
    }

    fn m(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Greedy choice of `p` linearly independent rows, seeded by `seed`.
    fn initial_basis(&self, seed: &[usize]) -> Result<Vec<usize>> {
        let p = self.p;
        let m = self.m();
        let mut basis: Vec<usize> = Vec::with_capacity(p);
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
        for i in seed.iter().copied().chain(0..m) {
            if basis.len() == p {
                break;
            }
            if i >= m || basis.contains(&i) {
                continue;
            }
            let mut v = self.row(i).to_vec();
            let norm0 = dot(&v, &v).sqrt();
            if norm0 == 0.0 {
                continue;
            }
            for q in &ortho {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 * norm0 {
                v.iter_mut().for_each(|a| *a /= norm);
                ortho.push(v);
                basis.push(i);
            }
        }
        if basis.len() < p {
            return Err(Error::RankDeficient {
                rank: basis.len(),
                cols: p,
            });
        }
        Ok(basis)
    }

    fn run(&self, tau: f64, mut basis: Vec<usize>, max_iter: usize) -> Result<Vertex> {
        let p = self.p;
        let m = self.m();
        let yscale = self.y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let rtol = 1e-10 * yscale;
        let wsum: f64 = self.w.iter().sum();
        let stol = 1e-11 * wsum.max(1.0);

        let mut in_basis = vec![false; m];
        let mut r = vec![0.0; m];
        let mut z = vec![0.0; m];
        let mut xb = vec![0.0; p * p];
        let mut binv = vec![0.0; p * p];
        let mut beta = vec![0.0; p];
        let mut a = vec![0.0; p];
        let mut v = vec![0.0; p];
        let mut degenerate = Vec::new();
        let mut bps: Vec<(f64, usize)> = Vec::with_capacity(m);
        for &b in &basis {
            in_basis[b] = true;
        }
        for iter in 0..max_iter {
            for (k, &b) in basis.iter().enumerate() {
                xb[k * p..(k + 1) * p].copy_from_slice(self.row(b));
            }
            if !invert_into(&mut xb, &mut binv, p) {
                return Err(Error::RankDeficient { rank: p - 1, cols: p });
            }
            for (i, bi) in beta.iter_mut().enumerate() {
                *bi = (0..p).map(|k| binv[i * p + k] * self.y[basis[k]]).sum();
            }
            a.iter_mut().for_each(|s| *s = 0.0);
            degenerate.clear();
            for i in 0..m {
                if in_basis[i] {
                    r[i] = 0.0;
                    continue;
                }
                let xi = &self.x[i * p..(i + 1) * p];
                r[i] = self.y[i] - dot(xi, &beta);
                if r[i].abs() <= rtol {
                    degenerate.push(i);
                } else {
                    let c = self.w[i] * if r[i] > 0.0 { tau } else { tau - 1.0 };
                    a.iter_mut().zip(xi).for_each(|(s, x)| *s += c * x);
                }
            }

            // Slope of the objective along each edge: column k of binv, sign s.
            let mut best: Option<(f64, usize, f64)> = None;
            for k in 0..p {
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = binv[i * p + k];
                }
                let g = dot(&a, &v);
                let wk = self.w[basis[k]];
                for s in [1.0, -1.0] {
                    let mut slope = if s > 0.0 { wk * (1.0 - tau) } else { wk * tau } - s * g;
                    for &i in &degenerate {
                        let dz = -s * dot(self.row(i), &v);
                        slope += self.w[i] * if dz > 0.0 { tau * dz } else { (tau - 1.0) * dz };
                    }
                    if slope < -stol && best.is_none_or(|(b, _, _)| slope < b) {
                        best = Some((slope, k, s));
                    }
                }
            }
            let Some((slope, k, s)) = best else {
                let objective = (0..m)
                    .filter(|&i| !in_basis[i])
                    .map(|i| self.w[i] * check_loss(r[i], tau))
                    .sum();
                return Ok(Vertex {
                    beta,
                    basis,
                    objective,
                    iterations: iter,
                });
            };

            for (i, vi) in v.iter_mut().enumerate() {
                *vi = binv[i * p + k];
            }
            bps.clear();
            for i in 0..m {
                if in_basis[i] || r[i].abs() <= rtol {
                    continue;
                }
                z[i] = dot(&self.x[i * p..(i + 1) * p], &v);
                let dr = -s * z[i];
                if r[i] * dr < 0.0 {
                    bps.push((-r[i] / dr, i));
                }
            }
            let mut cur = slope;
            let mut entering = None;
            // Few breakpoints are usually crossed, so take successive minima.
            while !bps.is_empty() {
                let mut j = 0;
                for (q, bp) in bps.iter().enumerate().skip(1) {
                    if bp.0 < bps[j].0 || (bp.0 == bps[j].0 && bp.1 < bps[j].1) {
                        j = q;
                    }
                }
                let (_, i) = bps.swap_remove(j);
                cur += self.w[i] * z[i].abs();
                if cur >= 0.0 {
                    entering = Some(i);
                    break;
                }
            }
            let Some(i) = entering else {
                return Err(Error::Unbounded);
            };
            in_basis[basis[k]] = false;
            in_basis[i] = true;
            basis[k] = i;
        }
        Err(Error::NotConverged {
            iterations: max_iter,
            residual: f64::NAN,
            last_iterate: beta,
        })
    }
}

/// Weighted quantile regression at level `tau`.
///
/// `warm` is a basis (observation indices) to start from, typically the
/// solution at a neighbouring quantile level or on the full sample.
pub fn solve_qr(data: &QrData, weights: &[f64], tau: f64, warm: Option<&[usize]>) -> Result<QrSolution> {
    Ok(solve_qr_path(data, weights, &[tau], warm)?.remove(0))
}

fn finish(walk: &Walk, data: &QrData, weights: &[f64], tau: f64, result: Result<Vertex>) -> Result<QrSolution> {
    match result {
        Ok(v) => Ok(QrSolution {
            objective: v.objective,
            beta: v.beta,
            basis: v.basis.into_iter().map(|j| walk.keep[j]).collect(),
            iterations: v.iterations,
        }),
        Err(e @ Error::RankDeficient { .. }) => Err(e),
        Err(e) => {
            log::warn!("vertex walk failed at tau = {tau} ({e}); falling back to the dense simplex");
            solve_qr_lp(data, weights, tau)
        }
    }
}

/// The same problem as a dense LP: `min sum w (tau u+ + (1 - tau) u-)`
/// subject to `X (b+ - b-) + u+ - u- = y`.
pub fn solve_qr_lp(data: &QrData, weights: &[f64], tau: f64) -> Result<QrSolution> {
    check_tau(tau)?;
    check_weights(data.n(), weights)?;
    let rank = data.rank();
    if rank < data.p() {
        return Err(Error::RankDeficient { rank, cols: data.p() });
    }
    let (n, p) = (data.n(), data.p());
    let nv = 2 * p + 2 * n;
    let mut lp = LinearProgram::new(nv);
    let mut cost = vec![0.0; nv];
    for i in 0..n {
        cost[2 * p + i] = weights[i] * tau;
        cost[2 * p + n + i] = weights[i] * (1.0 - tau);
    }
    lp.minimize(cost)?;
    for i in 0..n {
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(2 * p + 2);
        for (j, &xj) in data.row(i).iter().enumerate() {
            terms.push((j, xj));
            terms.push((p + j, -xj));
        }
        terms.push((2 * p + i, 1.0));
        terms.push((2 * p + n + i, -1.0));
        lp.constrain_sparse(&terms, Relation::Eq, data.y[i])?;
    }
    let sol = lp.solve()?;
    let beta: Vec<f64> = (0..p).map(|j| sol.x[j] - sol.x[p + j]).collect();
    let tol = 1e-9 * data.y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let basis = data
        .residuals(&beta)
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() <= tol)
        .map(|(i, _)| i)
        .take(p)
        .collect();
    Ok(QrSolution {
        objective: qr_objective(data, weights, tau, &beta),
        beta,
        basis,
        iterations: sol.iterations,
    })
}

/// Fits every level of an increasing grid. The first level starts from
/// `warm` when given, every later level from the previous solution.
pub fn solve_qr_path(data: &QrData, weights: &[f64], taus: &[f64], warm: Option<&[usize]>) -> Result<Vec<QrSolution>> {
    for &tau in taus {
        check_tau(tau)?;
    }
    check_weights(data.n(), weights)?;
    let warm = warm.unwrap_or(&[]);
    let walk = Walk::new(data, weights, warm);
    let mut start = walk.to_local(warm);
    let mut out: Vec<QrSolution> = Vec::with_capacity(taus.len());
    for &tau in taus {
        let sol = finish(&walk, data, weights, tau, walk.solve(tau, &start))?;
        start = walk.to_local(&sol.basis);
        out.push(sol);
    }
    Ok(out)
}
