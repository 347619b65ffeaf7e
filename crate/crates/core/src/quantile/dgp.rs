use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::qr::QrData;
use crate::error::{invalid, Result};
use crate::rng::{substream, tag, StreamRng};

/// Covariate coefficients on `(1, Z1, Z2)`.
pub const BETA: [f64; 3] = [0.0, std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

/// Regressor columns: treatment dummy, intercept, two normal covariates.
pub const NUM_REGRESSORS: usize = 4;

/// Column of the treatment coefficient.
pub const TREATMENT: usize = 0;

/// Draws `Y = (delta / sqrt n) D U + Z'beta + U` for replication `rep`.
///
/// The primitive draws `(D, Z, U)` depend only on `(master_seed, rep)`, so
/// every `delta` sees the same underlying sample.
pub fn simulate_dgp(n: usize, delta: f64, rep: u64, master_seed: u64) -> Result<QrData> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    if !delta.is_finite() {
        return Err(invalid("delta", "must be finite"));
    }
    let mut rng = substream(master_seed, &[tag::DATA, rep]);
    simulate_from(n, delta, &mut rng)
}

pub(crate) fn simulate_from(n: usize, delta: f64, rng: &mut StreamRng) -> Result<QrData> {
    let scale = delta / (n as f64).sqrt();
    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * NUM_REGRESSORS);
    for _ in 0..n {
        let d = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let u: f64 = rng.random();
        y.push(scale * d * u + BETA[0] + BETA[1] * z1 + BETA[2] * z2 + u);
        x.extend([d, 1.0, z1, z2]);
    }
    QrData::new(y, x, NUM_REGRESSORS)
}

/// True treatment effect `tau delta / sqrt n` at each level.
pub fn true_effect(n: usize, delta: f64, taus: &[f64]) -> Vec<f64> {
    let s = delta / (n as f64).sqrt();
    taus.iter().map(|t| t * s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_outcome_has_no_treatment_term() {
        let a = simulate_dgp(50, 0.0, 3, 1).unwrap();
        for i in 0..50 {
            let r = a.row(i);
            let u = a.y()[i] - BETA[1] * r[2] - BETA[2] * r[3];
            assert!((0.0..=1.0).contains(&u));
        }
    }

    #[test]
    fn common_draws_across_delta() {
        let a = simulate_dgp(30, 0.0, 1, 9).unwrap();
        let b = simulate_dgp(30, -4.0, 1, 9).unwrap();
        for i in 0..30 {
            assert_eq!(a.row(i), b.row(i));
            if a.row(i)[0] == 0.0 {
                assert_eq!(a.y()[i], b.y()[i]);
            }
        }
    }

    #[test]
    fn treatment_share_is_half() {
        let n = 10_000;
        let d = simulate_dgp(n, 0.0, 0, 2).unwrap();
        let mean = (0..n).map(|i| d.row(i)[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.015);
    }

    #[test]
    fn truth_is_monotone_iff_delta_nonnegative() {
        let taus: Vec<f64> = (0..25).map(|j| 0.2 + 0.025 * j as f64).collect();
        for delta in [0.0, 1.0, 2.0] {
            assert!(true_effect(200, delta, &taus).windows(2).all(|w| w[0] <= w[1]));
        }
        for delta in [-1.0, -4.0] {
            assert!(true_effect(200, delta, &taus).windows(2).all(|w| w[0] > w[1]));
        }
    }
}
