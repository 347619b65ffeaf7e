//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Problems are stated as `minimize c'x` subject to rows `a'x (<=|=|>=) b`
//! and `x >= 0`. Bland's smallest-index rule is used for both the entering
//! and the leaving choice, so the method terminates on degenerate problems.

use crate::error::{check_len, Error, Result};

/// Feasibility and optimality tolerance.
pub const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    /// A program in `num_vars` nonnegative variables with a zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn minimize(&mut self, cost: Vec<f64>) -> Result<&mut Self> {
        check_len(self.num_vars, cost.len())?;
        self.objective = cost;
        Ok(self)
    }

    pub fn maximize(&mut self, gain: Vec<f64>) -> Result<&mut Self> {
        self.minimize(gain.into_iter().map(|g| -g).collect())
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<&mut Self> {
        check_len(self.num_vars, coeffs.len())?;
        self.rows.push(Row { coeffs, relation, rhs });
        Ok(self)
    }

    /// Sparse variant of [`constrain`](Self::constrain).
    pub fn constrain_sparse(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> Result<&mut Self> {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, a) in terms {
            if j >= self.num_vars {
                return Err(Error::DimensionMismatch {
                    expected: self.num_vars,
                    got: j + 1,
                });
            }
            coeffs[j] += a;
        }
        self.constrain(coeffs, relation, rhs)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.num_vars;
        let m = self.rows.len();

        // Column layout: structural | slack/surplus | artificial.
        let mut num_slack = 0;
        let mut num_art = 0;
        for row in &self.rows {
            let rel = normalized_relation(row);
            match rel {
                Relation::Le => num_slack += 1,
                Relation::Ge => {
                    num_slack += 1;
                    num_art += 1;
                }
                Relation::Eq => num_art += 1,
            }
        }
        let art_start = n + num_slack;
        let ncols = art_start + num_art;
        let width = ncols + 1;
        let mut tab = Tableau {
            a: vec![0.0; m * width],
            basis: vec![0; m],
            width,
            ncols,
            iterations: 0,
        };

        let mut slack = n;
        let mut art = art_start;
        for (i, row) in self.rows.iter().enumerate() {
            let flip = row.rhs < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            let r = tab.row_mut(i);
            for (dst, src) in r[..n].iter_mut().zip(&row.coeffs) {
                *dst = sign * src;
            }
            r[ncols] = sign * row.rhs;
            match normalized_relation(row) {
                Relation::Le => {
                    r[slack] = 1.0;
                    tab.basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    r[slack] = -1.0;
                    r[art] = 1.0;
                    tab.basis[i] = art;
                    slack += 1;
                    art += 1;
                }
                Relation::Eq => {
                    r[art] = 1.0;
                    tab.basis[i] = art;
                    art += 1;
                }
            }
        }

        let cap = 50_000 + 50 * (m + ncols);

        if num_art > 0 {
            let mut phase1 = vec![0.0; ncols];
            for c in phase1.iter_mut().skip(art_start) {
                *c = 1.0;
            }
            let value = tab.optimize(&phase1, ncols, cap)?;
            if value > LP_TOL * (1.0 + self.rhs_scale()) {
                return Err(Error::Infeasible);
            }
            tab.evict_artificials(art_start);
        }

        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&self.objective);
        let objective = tab.optimize(&cost, art_start, cap)?;

        let mut x = vec![0.0; n];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                x[b] = tab.a[i * width + ncols];
            }
        }
        Ok(LpSolution {
            x,
            objective,
            iterations: tab.iterations,
        })
    }

    fn rhs_scale(&self) -> f64 {
        self.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max)
    }
}

fn normalized_relation(row: &Row) -> Relation {
    if row.rhs < 0.0 {
        match row.relation {
            Relation::Le => Relation::Ge,
            Relation::Ge => Relation::Le,
            Relation::Eq => Relation::Eq,
        }
    } else {
        row.relation
    }
}

struct Tableau {
    a: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
    ncols: usize,
    iterations: usize,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width;
        &mut self.a[i * w..(i + 1) * w]
    }

    /// Minimizes `cost` over the current basis using only columns below
    /// `allowed` as entering candidates. Returns the optimal value.
    fn optimize(&mut self, cost: &[f64], allowed: usize, cap: usize) -> Result<f64> {
        let w = self.width;
        let nc = self.ncols;
        // Reduced-cost row; the last entry holds minus the objective value.
        let mut z = vec![0.0; w];
        z[..nc].copy_from_slice(cost);
        for i in 0..self.rows() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * w..(i + 1) * w];
                for (zj, aij) in z.iter_mut().zip(row) {
                    *zj -= cb * aij;
                }
            }
        }

        loop {
            if self.iterations > cap {
                return Err(Error::NotConverged {
                    iterations: self.iterations,
                    residual: f64::NAN,
                    last_iterate: Vec::new(),
                });
            }
            // Bland: lowest-index improving column.
            let Some(enter) = (0..allowed).find(|&j| z[j] < -LP_TOL) else {
                return Ok(-z[nc]);
            };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..self.rows() {
                let aij = self.a[i * w + enter];
                if aij > LP_TOL {
                    let ratio = self.a[i * w + nc] / aij;
                    let better = match leave {
                        None => true,
                        Some(l) => ratio < best - LP_TOL || (ratio <= best + LP_TOL && self.basis[i] < self.basis[l]),
                    };
                    if better {
                        best = best.min(ratio);
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(leave, enter, &mut z);
        }
    }

    fn pivot(&mut self, r: usize, c: usize, z: &mut [f64]) {
        let w = self.width;
        let piv = self.a[r * w + c];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= piv;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = z[c];
        if f != 0.0 {
            for (x, p) in z.iter_mut().zip(prow.iter()) {
                *x -= f * p;
            }
            z[c] = 0.0;
        }
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// After phase one, pivots remaining zero-level artificials out of the
    /// basis. Rows that cannot be pivoted are redundant and are dropped.
    fn evict_artificials(&mut self, art_start: usize) {
        let w = self.width;
        let mut i = 0;
        while i < self.rows() {
            if self.basis[i] >= art_start {
                let col = (0..art_start).find(|&j| self.a[i * w + j].abs() > LP_TOL);
                match col {
                    Some(j) => {
                        let mut dummy = vec![0.0; w];
                        self.pivot(i, j, &mut dummy);
                        i += 1;
                    }
                    None => {
                        self.a.drain(i * w..(i + 1) * w);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}
