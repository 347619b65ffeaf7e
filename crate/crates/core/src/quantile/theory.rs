//! Local-limit rejection probabilities of the monotonicity test.
//!
//! Under the null with `theta_0 = 0` the tangent cone is the monotone cone
//! itself, so the limit statistic is the distance of `G` to the monotone
//! cone, and under the drift `tau * delta` it is the distance of
//! `G + tau * delta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{simulate_from, TREATMENT};
use super::{qr_fit, TauGrid};
use crate::convex::pava;
use crate::error::{invalid, Result};
use crate::functional::GaussianSampler;
use crate::grid::weighted_dist;
use crate::inference::check_alpha;
use crate::law::EmpiricalLaw;
use crate::rng::{substream, tag, SeedManifest};

/// Covariance of the Gaussian limit `G` of `sqrt(n) (theta_hat - theta_0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Sample covariance of `sqrt(N) theta_hat` over `reps` simulated fits
    /// of size `oracle_n` with no treatment effect.
    Simulated { oracle_n: usize, reps: usize },
    /// Closed form `4 (min(s, t) - s t)`: the error density is one on the
    /// support and the treatment entry of `E[XX']^{-1}` is 4.
    Analytic,
}

pub fn analytic_covariance(taus: &[f64]) -> Vec<Vec<f64>> {
    taus.iter()
        .map(|&s| taus.iter().map(|&t| 4.0 * (s.min(t) - s * t)).collect())
        .collect()
}

pub fn simulated_covariance(taus: &[f64], oracle_n: usize, reps: usize, master_seed: u64) -> Result<Vec<Vec<f64>>> {
    if reps < 2 {
        return Err(invalid("reps", "need at least two oracle fits"));
    }
    let grid = TauGrid {
        knots: taus.to_vec(),
        weight: 1.0,
    };
    let root = (oracle_n as f64).sqrt();
    let paths = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(master_seed, &[tag::ORACLE, oracle_n as u64, r]);
            let data = simulate_from(oracle_n, 0.0, &mut rng)?;
            let fit = qr_fit(&data, &grid)?;
            Ok(fit.beta.iter().map(|b| root * b[TREATMENT]).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let m = taus.len();
    let k = paths.len() as f64;
    let mean: Vec<f64> = (0..m).map(|j| paths.iter().map(|p| p[j]).sum::<f64>() / k).collect();
    let mut cov = vec![vec![0.0; m]; m];
    for p in &paths {
        for a in 0..m {
            for b in 0..=a {
                cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..m {
        for b in 0..=a {
            cov[a][b] /= k - 1.0;
            cov[b][a] = cov[a][b];
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub delta: f64,
    pub alpha: f64,
    pub rejection: f64,
}

/// Limit rejection probabilities for every `(delta, alpha)` pair, from
/// `draws` Gaussian draws shared across pairs.
pub fn theoretical_rows(
    grid: &TauGrid,
    deltas: &[f64],
    alphas: &[f64],
    source: CovarianceSource,
    draws: usize,
    master_seed: u64,
) -> Result<Vec<TheoryRow>> {
    grid.validate()?;
    for a in alphas {
        check_alpha(*a)?;
    }
    if draws == 0 {
        return Err(invalid("draws", "need at least one draw"));
    }
    let taus = &grid.knots;
    let cov = match source {
        CovarianceSource::Analytic => analytic_covariance(taus),
        CovarianceSource::Simulated { oracle_n, reps } => simulated_covariance(taus, oracle_n, reps, master_seed)?,
    };
    let sampler = GaussianSampler::centered(&cov)?;
    let w = vec![grid.weight; taus.len()];
    let dist = |v: &[f64]| weighted_dist(&w, v, &pava(v, &w));
    let seed = SeedManifest::new(master_seed, vec![tag::LIMIT]);
    // Per draw: the null statistic followed by one statistic per delta.
    let stats: Vec<Vec<f64>> = (0..draws)
        .into_par_iter()
        .map(|r| {
            let g = sampler.sample(&mut seed.stream(r as u64));
            let mut out = Vec::with_capacity(deltas.len() + 1);
            out.push(dist(&g));
            for &d in deltas {
                let shifted: Vec<f64> = g.iter().zip(taus).map(|(a, t)| a + t * d).collect();
                out.push(dist(&shifted));
            }
            out
        })
        .collect();
    let null = EmpiricalLaw::new(stats.iter().map(|s| s[0]).collect())?;
    let mut rows = Vec::new();
    for (k, &delta) in deltas.iter().enumerate() {
        for &alpha in alphas {
            let c = null.quantile(1.0 - alpha)?;
            let hits = stats.iter().filter(|s| s[k + 1] > c).count();
            rows.push(TheoryRow {
                delta,
                alpha,
                rejection: hits as f64 / draws as f64,
            });
        }
    }
    Ok(rows)
}

/// `P(phi'(G + tau delta) > c_{1-alpha})` on the default grid.
pub fn theoretical_local_rejection(
    delta: f64,
    alpha: f64,
    source: CovarianceSource,
    draws: usize,
    master_seed: u64,
) -> Result<f64> {
    let rows = theoretical_rows(&TauGrid::default(), &[delta], &[alpha], source, draws, master_seed)?;
    Ok(rows[0].rejection)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_covariance_is_a_scaled_bridge() {
        let c = analytic_covariance(&[0.25, 0.5]);
        assert!((c[0][0] - 0.75).abs() < 1e-12);
        assert!((c[0][1] - 0.5).abs() < 1e-12);
        assert!((c[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_rejection_matches_level() {
        let r = theoretical_local_rejection(0.0, 0.1, CovarianceSource::Analytic, 4000, 3).unwrap();
        assert!((r - 0.1).abs() < 0.02);
    }
}
