//! Monotonicity of a quantile treatment effect: data generation, quantile
//! regression paths, pairs bootstrap, the projection test, Monte Carlo
//! tables and their local-limit counterparts.

mod dgp;
mod qr;
mod theory;

pub use dgp::{simulate_dgp, true_effect, BETA, NUM_REGRESSORS, TREATMENT};
pub use qr::{check_loss, qr_objective, solve_qr, solve_qr_lp, solve_qr_path, Certificate, QrData, QrSolution};
pub use theory::{
    analytic_covariance, simulated_covariance, theoretical_local_rejection, theoretical_rows, CovarianceSource,
    TheoryRow,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_ensemble, BootstrapEnsemble, ResampleScheme};
use crate::convex::{distance_statistic, projection_law, ConvexSet, EpsilonRule, SupMode};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, Theta};
use crate::inference::{check_alpha, EstimateBundle, TestReport};
use crate::rng::{tag, SeedManifest};

/// Quantile levels and their quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub knots: Vec<f64>,
    pub weight: f64,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            knots: (0..25).map(|j| 0.2 + 0.025 * j as f64).collect(),
            weight: 0.025,
        }
    }
}

impl TauGrid {
    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::Empty("tau grid"));
        }
        if self.knots.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(invalid("tau_grid", "levels must lie in (0, 1)"));
        }
        if self.knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("tau_grid", "levels must be strictly increasing"));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(invalid("tau_weight", "must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn function(&self, values: Vec<f64>) -> Result<GridFunction> {
        GridFunction::with_uniform_weight(self.knots.clone(), values, self.weight)
    }
}

/// Quantile regression fit on every level of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFit {
    /// Treatment coefficient path.
    pub theta: GridFunction,
    pub beta: Vec<Vec<f64>>,
    pub objectives: Vec<f64>,
    pub bases: Vec<Vec<usize>>,
}

impl QrFit {
    pub fn certificates(&self, data: &QrData, weights: &[f64]) -> Vec<Certificate> {
        let tol = 1e-9 * data.y().iter().fold(1.0f64, |a, v| a.max(v.abs()));
        self.theta
            .grid()
            .iter()
            .zip(&self.beta)
            .map(|(&tau, b)| Certificate::at(data, weights, tau, b, tol))
            .collect()
    }
}

pub fn qr_fit(data: &QrData, grid: &TauGrid) -> Result<QrFit> {
    grid.validate()?;
    let rank = data.rank();
    if rank < data.p() {
        return Err(Error::RankDeficient { rank, cols: data.p() });
    }
    qr_fit_weighted(data, &vec![1.0; data.n()], grid, None)
}

pub fn qr_fit_weighted(data: &QrData, weights: &[f64], grid: &TauGrid, warm: Option<&[usize]>) -> Result<QrFit> {
    let path = solve_qr_path(data, weights, &grid.knots, warm)?;
    let theta = grid.function(path.iter().map(|s| s.beta[TREATMENT]).collect())?;
    let mut fit = QrFit {
        theta,
        beta: Vec::with_capacity(path.len()),
        objectives: Vec::with_capacity(path.len()),
        bases: Vec::with_capacity(path.len()),
    };
    for s in path {
        fit.beta.push(s.beta);
        fit.objectives.push(s.objective);
        fit.bases.push(s.basis);
    }
    Ok(fit)
}

pub fn fit_bundle(data: &QrData, fit: &QrFit) -> Result<EstimateBundle> {
    EstimateBundle::new(Theta::Grid(fit.theta.clone()), data.n())
}

/// Pairs bootstrap of `sqrt(n) (theta*(.) - theta_hat(.))`, each resample
/// warm-started from the full-sample vertex at the first level.
pub fn qr_bootstrap_ensemble(
    data: &QrData,
    fit: &QrFit,
    grid: &TauGrid,
    draws: usize,
    seed: &SeedManifest,
) -> Result<BootstrapEnsemble> {
    let bundle = fit_bundle(data, fit)?;
    let estimator = |d: &QrData, w: &[f64]| -> Result<Vec<f64>> {
        let star = qr_fit_weighted(d, w, grid, Some(&fit.bases[0]))?;
        Ok(star.theta.values().to_vec())
    };
    bootstrap_ensemble(estimator, data, &bundle, draws, ResampleScheme::Multinomial, seed)
}

/// Settings of one monotonicity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotoneTestConfig {
    #[serde(default)]
    pub grid: TauGrid,
    pub draws: usize,
    pub epsilon: EpsilonRule,
    pub alpha: f64,
    #[serde(default)]
    pub delta_bump: f64,
    #[serde(default)]
    pub mode: SupMode,
}

impl MonotoneTestConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.epsilon.validate()?;
        check_alpha(self.alpha)?;
        if self.draws < 2 {
            return Err(invalid("draws", "need at least two bootstrap draws"));
        }
        if !(self.delta_bump >= 0.0) {
            return Err(invalid("delta_bump", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Test of `H0: the treatment effect is nondecreasing in tau`.
pub fn monotonicity_test(data: &QrData, config: &MonotoneTestConfig, seed: &SeedManifest) -> Result<TestReport> {
    config.validate()?;
    let fit = qr_fit(data, &config.grid)?;
    let ensemble = qr_bootstrap_ensemble(data, &fit, &config.grid, config.draws, seed)?;
    let set = ConvexSet::monotone(config.grid.len());
    let statistic = distance_statistic(ensemble.bundle(), &set)?;
    let law = projection_law(&ensemble, &set, config.epsilon, config.mode)?;
    let mut report = TestReport::from_law(statistic, &law, config.alpha, config.delta_bump, seed.clone())?;
    let eps = config.epsilon.epsilon(data.n());
    report.diagnostics.notes.push(format!("epsilon_n = {eps:.6e}"));
    Ok(report)
}

/// Monte Carlo design for the rejection-rate tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileSimConfig {
    pub sample_sizes: Vec<usize>,
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub grid: TauGrid,
    pub draws: usize,
    pub mc_reps: usize,
    pub bandwidths: Vec<EpsilonRule>,
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub mode: SupMode,
    pub master_seed: u64,
}

impl QuantileSimConfig {
    /// Reduced-budget design at `n = 200` covering the size and power cells.
    pub fn ci() -> Self {
        Self {
            sample_sizes: vec![200],
            deltas: vec![0.0, 1.0, 2.0, -4.0, -6.0, -8.0],
            grid: TauGrid::default(),
            draws: 200,
            mc_reps: 500,
            bandwidths: default_bandwidths(),
            alphas: vec![0.1, 0.05, 0.01],
            mode: SupMode::Threshold,
            master_seed: 20_150_601,
        }
    }

    /// Every cell of both tables at a moderate budget.
    pub fn desk() -> Self {
        Self {
            sample_sizes: vec![200, 500],
            deltas: vec![0.0, 1.0, 2.0, -1.0, -2.0, -3.0, -4.0, -5.0, -6.0, -7.0, -8.0],
            mc_reps: 1000,
            ..Self::ci()
        }
    }

    /// The published budget: 5000 replications.
    pub fn full() -> Self {
        Self {
            mc_reps: 5000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.sample_sizes.is_empty() {
            return Err(Error::Empty("sample_sizes"));
        }
        if let Some(n) = self.sample_sizes.iter().find(|n| **n < 50) {
            return Err(invalid("sample_sizes", format!("n = {n} is below 50")));
        }
        if self.deltas.is_empty() {
            return Err(Error::Empty("deltas"));
        }
        if self.deltas.iter().any(|d| !d.is_finite()) {
            return Err(invalid("deltas", "must be finite"));
        }
        if self.draws < 2 {
            return Err(invalid("draws", "need at least two bootstrap draws"));
        }
        if self.mc_reps == 0 {
            return Err(invalid("mc_reps", "must be positive"));
        }
        if self.bandwidths.is_empty() {
            return Err(Error::Empty("bandwidths"));
        }
        for b in &self.bandwidths {
            b.validate()?;
        }
        if self.alphas.is_empty() {
            return Err(Error::Empty("alphas"));
        }
        for a in &self.alphas {
            check_alpha(*a)?;
        }
        Ok(())
    }
}

pub fn default_bandwidths() -> Vec<EpsilonRule> {
    [(1.0, 0.25), (1.0, 1.0 / 3.0), (0.01, 0.25), (0.01, 1.0 / 3.0)]
        .into_iter()
        .map(|(c, kappa)| EpsilonRule { c, kappa })
        .collect()
}

/// Rejection frequency of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub c: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub delta: f64,
    pub reps: usize,
    pub failed: usize,
    pub rejections: usize,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        if self.reps == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.reps as f64
        }
    }

    /// Binomial standard error of [`Self::rate`].
    pub fn std_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub config: QuantileSimConfig,
    pub cells: Vec<CellResult>,
}

impl MonteCarloResult {
    pub fn cell(&self, n: usize, c: f64, kappa: f64, alpha: f64, delta: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|r| r.n == n && r.c == c && (r.kappa - kappa).abs() < 1e-12 && r.alpha == alpha && r.delta == delta)
    }
}

/// Decisions of one replication, indexed `[bandwidth][alpha]`.
fn replication(config: &QuantileSimConfig, n: usize, delta: f64, rep: u64) -> Result<Vec<Vec<bool>>> {
    let data = simulate_dgp(n, delta, rep, config.master_seed)?;
    let fit = qr_fit(&data, &config.grid)?;
    let seed = SeedManifest::new(config.master_seed, vec![tag::BOOTSTRAP, n as u64, rep]);
    let ensemble = qr_bootstrap_ensemble(&data, &fit, &config.grid, config.draws, &seed)?;
    let set = ConvexSet::monotone(config.grid.len());
    let statistic = distance_statistic(ensemble.bundle(), &set)?;
    config
        .bandwidths
        .iter()
        .map(|&rule| {
            let law = projection_law(&ensemble, &set, rule, config.mode)?;
            config
                .alphas
                .iter()
                .map(|&alpha| Ok(statistic > law.quantile(1.0 - alpha)?))
                .collect()
        })
        .collect()
}

/// Runs every replication of every design point. Replication `rep` uses
/// data stream `(DATA, rep)` and bootstrap stream `(BOOTSTRAP, n, rep)`,
/// shared across `delta`.
pub fn run_monte_carlo(config: &QuantileSimConfig) -> Result<MonteCarloResult> {
    config.validate()?;
    let (nb, na) = (config.bandwidths.len(), config.alphas.len());
    let mut cells = Vec::new();
    for &n in &config.sample_sizes {
        for &delta in &config.deltas {
            let outcomes: Vec<Result<Vec<Vec<bool>>>> = (0..config.mc_reps as u64)
                .into_par_iter()
                .map(|rep| replication(config, n, delta, rep))
                .collect();
            let mut counts = vec![vec![0usize; na]; nb];
            let mut failed = 0;
            for (rep, out) in outcomes.into_iter().enumerate() {
                match out {
                    Ok(dec) => {
                        for (i, row) in dec.iter().enumerate() {
                            for (j, r) in row.iter().enumerate() {
                                counts[i][j] += usize::from(*r);
                            }
                        }
                    }
                    Err(e) => {
                        log::warn!("n = {n}, delta = {delta}, replication {rep} failed: {e}");
                        failed += 1;
                    }
                }
            }
            log::info!(
                "n = {n}, delta = {delta}: {} replications, {failed} failed",
                config.mc_reps
            );
            for (i, rule) in config.bandwidths.iter().enumerate() {
                for (j, &alpha) in config.alphas.iter().enumerate() {
                    cells.push(CellResult {
                        n,
                        c: rule.c,
                        kappa: rule.kappa,
                        alpha,
                        delta,
                        reps: config.mc_reps - failed,
                        failed,
                        rejections: counts[i][j],
                    });
                }
            }
        }
    }
    Ok(MonteCarloResult {
        config: config.clone(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_25_knots() {
        let g = TauGrid::default();
        assert_eq!(g.len(), 25);
        assert!((g.knots[24] - 0.8).abs() < 1e-12);
        g.validate().unwrap();
    }

    #[test]
    fn fits_satisfy_certificates() {
        let data = simulate_dgp(200, 0.0, 0, 4).unwrap();
        let fit = qr_fit(&data, &TauGrid::default()).unwrap();
        for c in fit.certificates(&data, &vec![1.0; 200]) {
            assert!(c.holds() && c.within_band(NUM_REGRESSORS), "{c:?}");
        }
    }

    #[test]
    fn constant_outcome_gives_zero_draws() {
        let mut data = simulate_dgp(60, 0.0, 0, 4).unwrap();
        let rows: Vec<Vec<f64>> = (0..60).map(|i| data.row(i).to_vec()).collect();
        data = QrData::from_rows(vec![1.5; 60], &rows).unwrap();
        let grid = TauGrid::default();
        let fit = qr_fit(&data, &grid).unwrap();
        let ens = qr_bootstrap_ensemble(&data, &fit, &grid, 5, &SeedManifest::new(1, vec![])).unwrap();
        for d in ens.draws() {
            assert!(d.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn single_draw_has_grid_shape() {
        let data = simulate_dgp(100, 0.0, 2, 4).unwrap();
        let grid = TauGrid::default();
        let fit = qr_fit(&data, &grid).unwrap();
        let ens = qr_bootstrap_ensemble(&data, &fit, &grid, 1, &SeedManifest::new(1, vec![])).unwrap();
        assert_eq!(ens.len(), 1);
        assert_eq!(ens.draws()[0].len(), 25);
    }

    #[test]
    fn config_validation() {
        let mut c = QuantileSimConfig::ci();
        c.validate().unwrap();
        c.alphas = vec![1.5];
        assert!(c.validate().is_err());
    }
}
