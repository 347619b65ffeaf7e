//! Inference on directionally differentiable functionals: plug-in
//! statistics, the standard and derivative-composition bootstrap, failure
//! diagnostics, and convex-set projection tests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bootstrap;
pub mod cli;
pub mod convex;
pub mod dominance;
pub mod error;
pub mod functional;
pub mod grid;
pub mod inference;
pub mod io;
pub mod law;
pub mod linalg;
pub mod lp;
pub mod quantile;
pub mod rng;

pub use error::{Error, Result};
