//! Discrete laws: empirical quantiles, cdf evaluation and the two distances
//! used to compare bootstrap laws (Kolmogorov–Smirnov and bounded Lipschitz).

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::lp::{LinearProgram, Relation};

/// Tolerance on the total mass of a law.
pub const MASS_TOL: f64 = 1e-12;

/// A finitely supported law with atoms sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub struct EmpiricalLaw {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    cum: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawLaw {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawLaw> for EmpiricalLaw {
    type Error = Error;
    fn try_from(raw: RawLaw) -> Result<Self> {
        EmpiricalLaw::with_probs(raw.atoms, raw.probs)
    }
}

impl From<EmpiricalLaw> for RawLaw {
    fn from(law: EmpiricalLaw) -> Self {
        RawLaw {
            atoms: law.atoms,
            probs: law.probs,
        }
    }
}

impl EmpiricalLaw {
    /// Uniform law over `atoms`.
    pub fn new(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("law atoms"));
        }
        if atoms.iter().any(|a| a.is_nan()) {
            return Err(invalid("atoms", "NaN atom"));
        }
        atoms.sort_by(f64::total_cmp);
        let b = atoms.len();
        let p = 1.0 / b as f64;
        let cum = (1..=b).map(|k| k as f64 / b as f64).collect();
        Ok(Self {
            probs: vec![p; b],
            atoms,
            cum,
        })
    }

    pub fn with_probs(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("law atoms"));
        }
        check_len(atoms.len(), probs.len())?;
        if atoms.iter().any(|a| a.is_nan()) {
            return Err(invalid("atoms", "NaN atom"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("probs", "probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid("probs", format!("probabilities sum to {total}, not 1")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (atoms, probs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut acc = 0.0;
        let cum = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { atoms, probs, cum })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Smallest atom whose cumulative probability reaches `level`.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(invalid("level", format!("{level} is outside (0, 1)")));
        }
        let idx = self.cum.partition_point(|&c| c < level - MASS_TOL);
        Ok(self.atoms[idx.min(self.atoms.len() - 1)])
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= x);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1].min(1.0)
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| a * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(a, p)| p * (a - m) * (a - m))
            .sum()
    }

    /// Width of the support.
    pub fn range(&self) -> f64 {
        self.atoms[self.atoms.len() - 1] - self.atoms[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Bounded Lipschitz.
    Bl,
    /// Kolmogorov–Smirnov.
    Ks,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bl" => Ok(Metric::Bl),
            "ks" => Ok(Metric::Ks),
            other => Err(invalid("metric", format!("unknown metric `{other}`"))),
        }
    }
}

/// Which exact solver computes the bounded Lipschitz linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlSolver {
    /// Dense simplex up to [`BL_SIMPLEX_MAX_SUPPORT`] points, chain recursion beyond.
    Auto,
    Simplex,
    Chain,
}

/// Largest merged support routed to the dense simplex by [`BlSolver::Auto`].
pub const BL_SIMPLEX_MAX_SUPPORT: usize = 120;

pub fn law_distance(a: &EmpiricalLaw, b: &EmpiricalLaw, metric: Metric) -> Result<f64> {
    match metric {
        Metric::Ks => Ok(ks_distance(a, b)),
        Metric::Bl => bl_distance(a, b, BlSolver::Auto),
    }
}

pub fn ks_distance(a: &EmpiricalLaw, b: &EmpiricalLaw) -> f64 {
    a.atoms
        .iter()
        .chain(&b.atoms)
        .map(|&x| (a.cdf(x) - b.cdf(x)).abs())
        .fold(0.0, f64::max)
}

/// Merged support and signed mass `p - q` at each support point.
fn signed_masses(a: &EmpiricalLaw, b: &EmpiricalLaw) -> (Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let mut pts: Vec<f64> = Vec::with_capacity(a.len() + b.len());
    let mut mass: Vec<f64> = Vec::with_capacity(a.len() + b.len());
    let push = |x: f64, m: f64, pts: &mut Vec<f64>, mass: &mut Vec<f64>| {
        if pts.last() == Some(&x) {
            *mass.last_mut().unwrap() += m;
        } else {
            pts.push(x);
            mass.push(m);
        }
    };
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a.atoms[i] <= b.atoms[j]);
        if take_a {
            push(a.atoms[i], a.probs[i], &mut pts, &mut mass);
            i += 1;
        } else {
            push(b.atoms[j], -b.probs[j], &mut pts, &mut mass);
            j += 1;
        }
    }
    (pts, mass)
}

/// Bounded Lipschitz distance: the maximum of `sum (p_i - q_i) f_i` over
/// functions with `|f| <= 1` and `|f(t_{i+1}) - f(t_i)| <= t_{i+1} - t_i` on
/// the merged support.
pub fn bl_distance(a: &EmpiricalLaw, b: &EmpiricalLaw, solver: BlSolver) -> Result<f64> {
    let (pts, mass) = signed_masses(a, b);
    let solver = match solver {
        BlSolver::Auto if pts.len() <= BL_SIMPLEX_MAX_SUPPORT => BlSolver::Simplex,
        BlSolver::Auto => BlSolver::Chain,
        s => s,
    };
    let value = match solver {
        BlSolver::Simplex => bl_simplex(&pts, &mass)?,
        _ => bl_chain(&pts, &mass),
    };
    Ok(value.clamp(0.0, 2.0))
}

fn bl_simplex(pts: &[f64], mass: &[f64]) -> Result<f64> {
    let m = pts.len();
    // Shift f = g - 1 so every variable is nonnegative: g in [0, 2].
    let mut lp = LinearProgram::new(m);
    lp.maximize(mass.to_vec())?;
    for i in 0..m {
        lp.constrain_sparse(&[(i, 1.0)], Relation::Le, 2.0)?;
    }
    for i in 0..m.saturating_sub(1) {
        let gap = pts[i + 1] - pts[i];
        lp.constrain_sparse(&[(i + 1, 1.0), (i, -1.0)], Relation::Le, gap)?;
        lp.constrain_sparse(&[(i, 1.0), (i + 1, -1.0)], Relation::Le, gap)?;
    }
    let sol = lp.solve()?;
    let shift: f64 = mass.iter().sum();
    Ok(-sol.objective - shift)
}

/// Concave piecewise-linear function on `[-1, 1]`, stored as its value and
/// slope at the left end plus the slope decrements at interior breakpoints.
struct ConcaveChain {
    v0: f64,
    s0: f64,
    bps: Vec<(f64, f64)>,
}

impl ConcaveChain {
    /// `x -> max { V(y) : |y - x| <= g, y in [-1, 1] }`.
    fn window(&mut self, g: f64) {
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(self.bps.len() + 2);
        if self.s0 <= 0.0 {
            // Maximum at the left end: plateau then the right part shifted.
            if self.s0 < 0.0 {
                next.push((-1.0 + g, -self.s0));
            }
            next.extend(self.bps.iter().map(|&(x, d)| (x + g, d)));
            self.s0 = 0.0;
            self.bps = next;
            self.bps.retain(|&(x, _)| x < 1.0);
            return;
        }
        let mut slope = self.s0;
        let mut split = None;
        for (k, &(_, d)) in self.bps.iter().enumerate() {
            if slope - d <= 0.0 {
                split = Some(k);
                break;
            }
            slope -= d;
        }
        match split {
            Some(k) => {
                let (xk, dk) = self.bps[k];
                next.extend(self.bps[..k].iter().map(|&(x, d)| (x - g, d)));
                next.push((xk - g, slope));
                if dk - slope > 0.0 {
                    next.push((xk + g, dk - slope));
                }
                next.extend(self.bps[k + 1..].iter().map(|&(x, d)| (x + g, d)));
            }
            None => {
                next.extend(self.bps.iter().map(|&(x, d)| (x - g, d)));
                next.push((1.0 - g, slope));
            }
        }
        // The shifted left part is anchored at -1 - g with the old left-end
        // value and slope; integrate across the cut at -1.
        let mut pos = -1.0 - g;
        let mut v = self.v0;
        let mut s = self.s0;
        let mut first = 0;
        while first < next.len() && next[first].0 <= -1.0 {
            let (x, d) = next[first];
            v += s * (x - pos);
            pos = x;
            s -= d;
            first += 1;
        }
        v += s * (-1.0 - pos);
        self.v0 = v;
        self.s0 = s;
        next.drain(..first);
        next.retain(|&(x, _)| x < 1.0);
        self.bps = next;
    }

    fn add_linear(&mut self, mu: f64) {
        self.v0 -= mu;
        self.s0 += mu;
    }

    fn maximum(&self) -> f64 {
        let mut v = self.v0;
        let mut s = self.s0;
        let mut pos = -1.0;
        for &(x, d) in &self.bps {
            if s <= 0.0 {
                return v;
            }
            v += s * (x - pos);
            pos = x;
            s -= d;
        }
        if s > 0.0 {
            v += s * (1.0 - pos);
        }
        v
    }
}

/// Exact solution of the bounded Lipschitz program by forward recursion over
/// the chain of support points.
fn bl_chain(pts: &[f64], mass: &[f64]) -> f64 {
    let mut f = ConcaveChain {
        v0: -mass[0],
        s0: mass[0],
        bps: Vec::new(),
    };
    for i in 1..pts.len() {
        f.window(pts[i] - pts[i - 1]);
        f.add_linear(mass[i]);
    }
    f.maximum()
}
