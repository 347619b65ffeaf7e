//! Finite-dimensional representations of parameters.
//!
//! A [`GridFunction`] stores a function on strictly increasing knots together
//! with positive quadrature weights; the weights define the inner product
//! `<f, g> = sum_i w_i f_i g_i`. A plain vector is the special case of unit
//! weights, which is what [`Theta::Vector`] uses.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Empty("grid"));
        }
        check_len(grid.len(), values.len())?;
        check_len(grid.len(), weights.len())?;
        if grid.iter().any(|t| !t.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid", "knots and values must be finite"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid", "knots must be strictly increasing"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("weights", "quadrature weights must be positive"));
        }
        Ok(Self { grid, values, weights })
    }

    /// Riemann weights: each knot gets the width of the cell to its right,
    /// and the last knot reuses the previous width. On a uniform grid every
    /// weight equals the spacing.
    pub fn with_riemann_weights(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let weights = riemann_weights(&grid)?;
        Self::new(grid, values, weights)
    }

    pub fn with_uniform_weight(grid: Vec<f64>, values: Vec<f64>, weight: f64) -> Result<Self> {
        let weights = vec![weight; grid.len()];
        Self::new(grid, values, weights)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Same knots and weights, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_len(self.len(), values.len())?;
        Ok(Self {
            grid: self.grid.clone(),
            values,
            weights: self.weights.clone(),
        })
    }

    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(weighted_inner(&self.weights, &self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        weighted_norm(&self.weights, &self.values)
    }
}

pub fn riemann_weights(grid: &[f64]) -> Result<Vec<f64>> {
    match grid.len() {
        0 => Err(Error::Empty("grid")),
        1 => Ok(vec![1.0]),
        m => {
            let mut w: Vec<f64> = grid.windows(2).map(|p| p[1] - p[0]).collect();
            w.push(w[m - 2]);
            Ok(w)
        }
    }
}

#[inline]
pub fn weighted_inner(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}

#[inline]
pub fn weighted_norm(weights: &[f64], a: &[f64]) -> f64 {
    weighted_inner(weights, a, a).sqrt()
}

/// Weighted norm of `a - b`.
#[inline]
pub fn weighted_dist(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A parameter value: either a Euclidean vector or a function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Theta {
    Vector { values: Vec<f64> },
    Grid(GridFunction),
}

impl Theta {
    pub fn vector(values: Vec<f64>) -> Self {
        Theta::Vector { values }
    }

    pub fn scalar(value: f64) -> Self {
        Theta::Vector { values: vec![value] }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Theta::Vector { values } => values,
            Theta::Grid(g) => g.values(),
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    /// Quadrature weights of the norm; unit weights for plain vectors.
    pub fn weights(&self) -> std::borrow::Cow<'_, [f64]> {
        match self {
            Theta::Vector { values } => std::borrow::Cow::Owned(vec![1.0; values.len()]),
            Theta::Grid(g) => std::borrow::Cow::Borrowed(g.weights()),
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_len(self.len(), values.len())?;
        Ok(match self {
            Theta::Vector { .. } => Theta::Vector { values },
            Theta::Grid(g) => Theta::Grid(g.with_values(values)?),
        })
    }

    pub fn norm(&self) -> f64 {
        match self {
            Theta::Vector { values } => values.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Theta::Grid(g) => g.norm(),
        }
    }
}

impl From<GridFunction> for Theta {
    fn from(g: GridFunction) -> Self {
        Theta::Grid(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridFunction::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(GridFunction::new(vec![0.0, 1.0], vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(GridFunction::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn riemann_weights_on_uniform_grid() {
        let grid: Vec<f64> = (0..25).map(|i| 0.2 + 0.025 * i as f64).collect();
        let w = riemann_weights(&grid).unwrap();
        assert!(w.iter().all(|x| (x - 0.025).abs() < 1e-12));
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|m| {
            (
                prop::collection::vec(-10.0..10.0f64, m),
                prop::collection::vec(-10.0..10.0f64, m),
                prop::collection::vec(0.01..3.0f64, m),
            )
        })
    }

    proptest! {
        #[test]
        fn inner_product_axioms((a, b, w) in pair()) {
            let grid: Vec<f64> = (0..a.len()).map(|i| i as f64).collect();
            let f = GridFunction::new(grid.clone(), a.clone(), w.clone()).unwrap();
            let g = GridFunction::new(grid, b, w).unwrap();
            let fg = f.inner(&g).unwrap();
            prop_assert!((fg - g.inner(&f).unwrap()).abs() <= 1e-12 * (1.0 + fg.abs()));
            prop_assert!(fg.abs() <= f.norm() * g.norm() * (1.0 + 1e-12) + 1e-12);
            prop_assert_eq!(f.norm() == 0.0, a.iter().all(|v| *v == 0.0));
        }
    }
}
