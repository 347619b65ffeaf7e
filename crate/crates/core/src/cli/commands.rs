use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{
    BlParams, DiagnoseFunctional, DiagnoseParams, DominanceParams, MomentsParams, MonotoneParams, Params, RunConfig,
    SimulatePlan,
};
use super::CliError;
use crate::bootstrap::{bootstrap_ensemble, mean_bundle, run_test, statistic_law, weighted_mean, LawMode};
use crate::dominance::{dominance_test, TwoSample};
use crate::functional::{estimate_derivative, gaussian_limit, invariance_probe, FunctionalSpec, Tuning};
use crate::inference::TestReport;
use crate::io::{self, Table};
use crate::law::{law_distance, Metric};
use crate::quantile::{monotonicity_test, run_monte_carlo, theoretical_rows, CellResult, TheoryRow};
use crate::rng::{tag, SeedManifest};

pub(super) struct CommandOutput {
    pub message: String,
    /// Files written below the output directory.
    pub files: Vec<String>,
    pub inputs: Vec<PathBuf>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn open_input(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Input errors are the caller's fault.
fn input<T>(path: &Path, r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| usage(format!("{}: {e}", path.display())))
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let f = File::create(self.dir.join(name)).map_err(crate::Error::from)?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        io::write_json(self.create(name)?, value)?;
        Ok(())
    }
}

pub(super) fn run_command(config: &RunConfig) -> Result<CommandOutput, CliError> {
    let mut w = Writer {
        dir: &config.output_dir,
        files: Vec::new(),
    };
    let (message, inputs) = match &config.params {
        Params::SimulateTables(plan) => (simulate_tables(plan, &mut w)?, vec![]),
        Params::TestMonotone(p) => (test_monotone(p, config.seed, &mut w)?, vec![p.input.clone()]),
        Params::TestMoments(p) => (test_moments(p, config.seed, &mut w)?, vec![p.input.clone()]),
        Params::TestDominance(p) => (test_dominance(p, config.seed, &mut w)?, vec![p.input.clone()]),
        Params::DiagnoseBootstrap(p) => (diagnose(p, config.seed, &mut w)?, vec![p.input.clone()]),
        Params::BlDistance(p) => (bl(p, &mut w)?, vec![p.left.clone(), p.right.clone()]),
    };
    Ok(CommandOutput {
        message,
        files: w.files,
        inputs,
    })
}

fn verdict(r: &TestReport) -> String {
    format!(
        "statistic={:.6} critical_value={:.6} p_value={:.4} reject={} ({})",
        r.statistic,
        r.critical_value + r.delta_bump,
        r.p_value,
        r.reject,
        r.verdict()
    )
}

fn bootstrap_seed(seed: u64) -> SeedManifest {
    SeedManifest::new(seed, vec![tag::BOOTSTRAP])
}

fn simulate_tables(plan: &SimulatePlan, w: &mut Writer) -> Result<String, CliError> {
    let sim = &plan.sim;
    let result = run_monte_carlo(sim)?;
    let theory: Vec<TheoryRow> = if plan.theory_draws > 0 {
        theoretical_rows(
            &sim.grid,
            &sim.deltas,
            &sim.alphas,
            plan.covariance,
            plan.theory_draws,
            sim.master_seed,
        )?
    } else {
        Vec::new()
    };
    io::write_cells(w.create("cells.csv")?, &result.cells)?;
    io::write_wide_table(w.create("table.csv")?, &result.cells, &theory)?;
    if !theory.is_empty() {
        io::write_theory(w.create("theory.csv")?, &theory)?;
    }
    write_curves(w.create("curves.csv")?, &result.cells, &theory)?;
    let failed: usize = result
        .cells
        .iter()
        .filter(|c| c.alpha == sim.alphas[0] && c.c == sim.bandwidths[0].c && c.kappa == sim.bandwidths[0].kappa)
        .map(|c| c.failed)
        .sum();
    Ok(format!(
        "{} cells over {} replications each; {failed} failed replications; tables in {}",
        result.cells.len(),
        sim.mc_reps,
        w.dir.display()
    ))
}

/// Rejection rate against delta, one series per bandwidth plus the
/// theoretical curve.
fn write_curves<W: std::io::Write>(out: W, cells: &[CellResult], theory: &[TheoryRow]) -> crate::Result<()> {
    let mut out = csv::Writer::from_writer(out);
    out.write_record(["series", "n", "alpha", "delta", "rate"])?;
    for c in cells {
        out.write_record([
            format!("C={} kappa={:.4}", c.c, c.kappa),
            c.n.to_string(),
            c.alpha.to_string(),
            c.delta.to_string(),
            format!("{:.6}", c.rate()),
        ])?;
    }
    for t in theory {
        out.write_record([
            "theoretical".to_string(),
            String::new(),
            t.alpha.to_string(),
            t.delta.to_string(),
            format!("{:.6}", t.rejection),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn test_monotone(p: &MonotoneParams, seed: u64, w: &mut Writer) -> Result<String, CliError> {
    let data = input(&p.input, io::read_qr_data(open_input(&p.input)?))?;
    let report = monotonicity_test(&data, &p.test_config(), &bootstrap_seed(seed))?;
    w.json("report.json", &report)?;
    Ok(verdict(&report))
}

fn read_rows(path: &Path) -> Result<Table, CliError> {
    let t = input(path, Table::read(open_input(path)?))?;
    if t.rows.is_empty() {
        return Err(usage(format!("{}: no observations", path.display())));
    }
    Ok(t)
}

fn test_moments(p: &MomentsParams, seed: u64, w: &mut Writer) -> Result<String, CliError> {
    let rows = read_rows(&p.input)?.rows;
    let bundle = mean_bundle(&rows)?;
    let spec = FunctionalSpec::MaxCoord { dim: rows[0].len() };
    let report = run_test(
        |d: &[Vec<f64>], wt: &[f64]| weighted_mean(d, wt),
        rows.as_slice(),
        &bundle,
        &spec,
        p.kappa.map(|kappa| Tuning::Selection { kappa }),
        &p.settings(),
        &bootstrap_seed(seed),
    )?;
    w.json("report.json", &report)?;
    Ok(verdict(&report))
}

fn test_dominance(p: &DominanceParams, seed: u64, w: &mut Writer) -> Result<String, CliError> {
    let t = read_rows(&p.input)?;
    let c = input(&p.input, t.require(&["group", "value"]))?;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for row in &t.rows {
        let g = row[c[0]];
        if g == 1.0 {
            first.push(row[c[1]]);
        } else if g == 2.0 {
            second.push(row[c[1]]);
        } else {
            return Err(usage(format!("{}: group must be 1 or 2, found {g}", p.input.display())));
        }
    }
    let data = input(&p.input, TwoSample::new(first, second))?;
    let report = dominance_test(&data, &p.test_config(), &bootstrap_seed(seed))?;
    w.json("report.json", &report)?;
    Ok(verdict(&report))
}

#[derive(Serialize)]
struct DiagnoseSummary {
    functional: FunctionalSpec,
    tuning: Tuning,
    selected: Vec<usize>,
    bl_standard_vs_modified: f64,
    ks_standard_vs_modified: f64,
    standard_q95: f64,
    modified_q95: f64,
    probe_max_bl: f64,
    probe_noise_floor: f64,
}

fn sample_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / n;
            }
        }
    }
    cov
}

fn diagnose(p: &DiagnoseParams, seed: u64, w: &mut Writer) -> Result<String, CliError> {
    let rows = read_rows(&p.input)?.rows;
    let d = rows[0].len();
    let kind = p.functional.unwrap_or(if d == 1 {
        DiagnoseFunctional::AbsMean
    } else {
        DiagnoseFunctional::MaxCoord
    });
    let spec = match kind {
        DiagnoseFunctional::AbsMean if d != 1 => {
            return Err(usage(format!(
                "abs_mean needs one column, {} has {d}",
                p.input.display()
            )))
        }
        DiagnoseFunctional::AbsMean => FunctionalSpec::AbsMean,
        DiagnoseFunctional::MaxCoord => FunctionalSpec::MaxCoord { dim: d },
    };
    let bundle = mean_bundle(&rows)?;
    let tuning = p
        .kappa
        .map(|kappa| Tuning::Selection { kappa })
        .unwrap_or_else(|| Tuning::default_for(&spec, rows.len()));
    let derivative = estimate_derivative(&spec, &bundle, tuning)?;
    let seed_b = bootstrap_seed(seed);
    let ensemble = bootstrap_ensemble(
        |x: &[Vec<f64>], wt: &[f64]| weighted_mean(x, wt),
        rows.as_slice(),
        &bundle,
        p.draws,
        p.scheme,
        &seed_b,
    )?;
    let standard = statistic_law(&ensemble, LawMode::Standard(&spec))?;
    let modified = statistic_law(&ensemble, LawMode::Modified(&derivative))?;

    let shifts = p
        .shifts
        .clone()
        .unwrap_or_else(|| [0.5, 1.0, 3.0].iter().map(|t| vec![*t; d]).collect());
    if let Some(s) = shifts.iter().find(|s| s.len() != d) {
        return Err(usage(format!("probe shift {s:?} does not have {d} components")));
    }
    let sampler = gaussian_limit(&sample_covariance(&rows))?;
    let probe = invariance_probe(
        |h: &[f64]| derivative.eval(h),
        sampler,
        &shifts,
        p.probe_draws,
        &SeedManifest::new(seed, vec![tag::PROBE]),
    )?;

    let summary = DiagnoseSummary {
        functional: spec,
        tuning,
        selected: derivative.selected.clone(),
        bl_standard_vs_modified: law_distance(&standard, &modified, Metric::Bl)?,
        ks_standard_vs_modified: law_distance(&standard, &modified, Metric::Ks)?,
        standard_q95: standard.quantile(0.95)?,
        modified_q95: modified.quantile(0.95)?,
        probe_max_bl: probe.iter().map(|r| r.bl_distance).fold(0.0, f64::max),
        probe_noise_floor: probe[0].noise_floor,
    };
    io::write_ensemble(w.create("ensemble.csv")?, &ensemble)?;
    w.json("ensemble_manifest.json", &io::EnsembleManifest::of(&ensemble))?;
    io::write_law(w.create("standard_law.csv")?, &standard)?;
    io::write_law(w.create("modified_law.csv")?, &modified)?;
    io::write_probe(w.create("probe.csv")?, &probe)?;
    w.json("summary.json", &summary)?;
    Ok(format!(
        "standard vs modified: BL={:.6} KS={:.6}; q95 {:.4} vs {:.4}; probe max BL={:.6} (noise floor {:.6})",
        summary.bl_standard_vs_modified,
        summary.ks_standard_vs_modified,
        summary.standard_q95,
        summary.modified_q95,
        summary.probe_max_bl,
        summary.probe_noise_floor
    ))
}

#[derive(Serialize)]
struct DistanceResult {
    metric: Metric,
    distance: f64,
}

fn bl(p: &BlParams, w: &mut Writer) -> Result<String, CliError> {
    let left = input(&p.left, io::read_law(open_input(&p.left)?))?;
    let right = input(&p.right, io::read_law(open_input(&p.right)?))?;
    let distance = law_distance(&left, &right, p.metric)?;
    w.json(
        "distance.json",
        &DistanceResult {
            metric: p.metric,
            distance,
        },
    )?;
    Ok(format!("{distance:.6}"))
}
