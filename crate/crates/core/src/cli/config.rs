//! Run configuration: a flat JSON file whose `params` block depends on the
//! command. Flags override file values, file values override defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::bootstrap::{ResampleScheme, TestSettings};
use crate::convex::{EpsilonRule, SupMode};
use crate::dominance::DominanceConfig;
use crate::law::Metric;
use crate::quantile::{CovarianceSource, MonotoneTestConfig, QuantileSimConfig, TauGrid};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DDBOOT_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "ddboot-output";
pub const DEFAULT_SEED: u64 = 20_150_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    SimulateTables,
    TestMonotone,
    TestMoments,
    TestDominance,
    DiagnoseBootstrap,
    BlDistance,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::SimulateTables => "simulate-tables",
            CommandKind::TestMonotone => "test-monotone",
            CommandKind::TestMoments => "test-moments",
            CommandKind::TestDominance => "test-dominance",
            CommandKind::DiagnoseBootstrap => "diagnose-bootstrap",
            CommandKind::BlDistance => "bl-distance",
        }
    }
}

/// Budget profile of the Monte Carlo study.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Ci,
    Desk,
    Full,
}

/// The file as written by the user.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub command: Option<CommandKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub profile: Option<Profile>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// Values given on the command line; `None` defers to the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<CommandKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub profile: Option<Profile>,
    /// Flag-level parameters such as input paths, merged into `params`.
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub sample_sizes: Option<Vec<usize>>,
    pub deltas: Option<Vec<f64>>,
    pub grid: Option<TauGrid>,
    pub draws: Option<usize>,
    pub mc_reps: Option<usize>,
    pub bandwidths: Option<Vec<EpsilonRule>>,
    pub alphas: Option<Vec<f64>>,
    pub mode: Option<SupMode>,
    /// Gaussian draws behind the theoretical rows; zero skips them.
    pub theory_draws: Option<usize>,
    pub covariance: Option<CovarianceSource>,
}

/// Monte Carlo design after profile defaults and overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatePlan {
    pub sim: QuantileSimConfig,
    pub theory_draws: usize,
    pub covariance: CovarianceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotoneParams {
    pub input: PathBuf,
    #[serde(default)]
    pub grid: TauGrid,
    #[serde(default = "default_qr_draws")]
    pub draws: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: EpsilonRule,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub delta_bump: f64,
    #[serde(default)]
    pub mode: SupMode,
}

impl MonotoneParams {
    pub fn test_config(&self) -> MonotoneTestConfig {
        MonotoneTestConfig {
            grid: self.grid.clone(),
            draws: self.draws,
            epsilon: self.epsilon,
            alpha: self.alpha,
            delta_bump: self.delta_bump,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsParams {
    /// CSV whose columns are moment functions with `E[X_j] <= 0` under the null.
    pub input: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub delta_bump: f64,
    #[serde(default)]
    pub scheme: ResampleScheme,
    /// Selection slack; `n^{-1/3}` when absent.
    pub kappa: Option<f64>,
}

impl MomentsParams {
    pub fn settings(&self) -> TestSettings {
        TestSettings {
            alpha: self.alpha,
            delta_bump: self.delta_bump,
            draws: self.draws,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceParams {
    /// CSV with columns `group` (1 or 2) and `value`.
    pub input: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub delta_bump: f64,
    #[serde(default)]
    pub scheme: ResampleScheme,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    pub tau: Option<f64>,
}

impl DominanceParams {
    pub fn test_config(&self) -> DominanceConfig {
        DominanceConfig {
            alpha: self.alpha,
            delta_bump: self.delta_bump,
            draws: self.draws,
            scheme: self.scheme,
            grid_points: self.grid_points,
            tau: self.tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnoseFunctional {
    AbsMean,
    MaxCoord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseParams {
    pub input: PathBuf,
    /// Abs-mean for one column, max-coordinate otherwise, when absent.
    pub functional: Option<DiagnoseFunctional>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub scheme: ResampleScheme,
    pub kappa: Option<f64>,
    /// Shifts of the invariance probe; multiples of the unit vector when absent.
    pub shifts: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_probe_draws")]
    pub probe_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlParams {
    pub left: PathBuf,
    pub right: PathBuf,
    #[serde(default = "default_metric")]
    pub metric: Metric,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_draws() -> usize {
    1000
}
fn default_qr_draws() -> usize {
    200
}
fn default_probe_draws() -> usize {
    10_000
}
fn default_grid_points() -> usize {
    100
}
fn default_metric() -> Metric {
    Metric::Bl
}
fn default_epsilon() -> EpsilonRule {
    EpsilonRule {
        c: 1.0,
        kappa: 1.0 / 3.0,
    }
}

/// Command-specific parameters after defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    SimulateTables(SimulatePlan),
    TestMonotone(MonotoneParams),
    TestMoments(MomentsParams),
    TestDominance(DominanceParams),
    DiagnoseBootstrap(DiagnoseParams),
    BlDistance(BlParams),
}

/// The fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub profile: Profile,
    pub params: Params,
}

impl RunConfig {
    /// A configuration file that reproduces this run exactly.
    pub fn to_config_file(&self) -> serde_json::Value {
        let params = match &self.params {
            Params::SimulateTables(plan) => {
                let mut v = serde_json::to_value(&plan.sim).expect("plain data serializes");
                let m = v.as_object_mut().expect("struct serializes to an object");
                m.remove("master_seed");
                m.insert("theory_draws".into(), plan.theory_draws.into());
                m.insert(
                    "covariance".into(),
                    serde_json::to_value(plan.covariance).expect("plain data serializes"),
                );
                v
            }
            other => serde_json::to_value(other).expect("plain data serializes"),
        };
        serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "profile": self.profile,
            "params": params,
        })
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn read_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        usage(format!("{}: at `{key}`: {}", path.display(), e.inner()))
    })
}

fn typed<T: DeserializeOwned>(params: serde_json::Map<String, serde_json::Value>) -> Result<T, CliError> {
    serde_path_to_error::deserialize(serde_json::Value::Object(params)).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." {
            "params".to_string()
        } else {
            format!("params.{path}")
        };
        usage(format!("at `{key}`: {}", e.inner()))
    })
}

fn check(r: crate::Result<()>) -> Result<(), CliError> {
    r.map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// Merges file and flags and validates every parameter.
pub fn resolve(file: ConfigFile, flags: Overrides, env_output: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let command = match (flags.command, file.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(usage(format!(
                "command `{}` conflicts with `{}` in the config file",
                a.name(),
                b.name()
            )))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(usage("no command given")),
    };
    let seed = flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let output_dir = flags
        .output_dir
        .or(file.output_dir)
        .or(env_output)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let profile = flags.profile.or(file.profile).unwrap_or_default();
    let mut raw = file.params;
    raw.extend(flags.params);

    let params = match command {
        CommandKind::SimulateTables => {
            let p: SimulateParams = typed(raw)?;
            let base = match profile {
                Profile::Ci => QuantileSimConfig::ci(),
                Profile::Desk => QuantileSimConfig::desk(),
                Profile::Full => QuantileSimConfig::full(),
            };
            let sim = QuantileSimConfig {
                sample_sizes: p.sample_sizes.unwrap_or(base.sample_sizes),
                deltas: p.deltas.unwrap_or(base.deltas),
                grid: p.grid.unwrap_or(base.grid),
                draws: p.draws.unwrap_or(base.draws),
                mc_reps: p.mc_reps.unwrap_or(base.mc_reps),
                bandwidths: p.bandwidths.unwrap_or(base.bandwidths),
                alphas: p.alphas.unwrap_or(base.alphas),
                mode: p.mode.unwrap_or(base.mode),
                master_seed: seed,
            };
            check(sim.validate())?;
            let covariance = p.covariance.unwrap_or(CovarianceSource::Analytic);
            if let CovarianceSource::Simulated { oracle_n, reps } = covariance {
                if oracle_n < 50 || reps < 2 {
                    return Err(usage(
                        "invalid configuration: covariance needs oracle_n >= 50 and reps >= 2",
                    ));
                }
            }
            Params::SimulateTables(SimulatePlan {
                sim,
                theory_draws: p.theory_draws.unwrap_or(100_000),
                covariance,
            })
        }
        CommandKind::TestMonotone => {
            let p: MonotoneParams = typed(raw)?;
            check(p.test_config().validate())?;
            Params::TestMonotone(p)
        }
        CommandKind::TestMoments => {
            let p: MomentsParams = typed(raw)?;
            check(p.settings().validate())?;
            check_positive("kappa", p.kappa)?;
            Params::TestMoments(p)
        }
        CommandKind::TestDominance => {
            let p: DominanceParams = typed(raw)?;
            check(p.test_config().validate())?;
            Params::TestDominance(p)
        }
        CommandKind::DiagnoseBootstrap => {
            let p: DiagnoseParams = typed(raw)?;
            if p.draws == 0 {
                return Err(usage("invalid configuration: `draws` must be positive"));
            }
            if p.probe_draws == 0 {
                return Err(usage("invalid configuration: `probe_draws` must be positive"));
            }
            check_positive("kappa", p.kappa)?;
            Params::DiagnoseBootstrap(p)
        }
        CommandKind::BlDistance => Params::BlDistance(typed(raw)?),
    };
    Ok(RunConfig {
        command,
        seed,
        output_dir,
        profile,
        params,
    })
}

fn check_positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(usage(format!("invalid configuration: `{name}` must be positive")))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn file(v: serde_json::Value) -> ConfigFile {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn minimal_simulate_tables_uses_defaults() {
        let c = resolve(file(json!({"command": "simulate-tables"})), Overrides::default(), None).unwrap();
        let Params::SimulateTables(plan) = c.params else {
            panic!()
        };
        assert_eq!(plan.sim.grid.len(), 25);
        assert_eq!(plan.sim.draws, 200);
        assert_eq!(c.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
    }

    #[test]
    fn bad_alpha_names_the_key() {
        let f = file(json!({"command": "simulate-tables", "params": {"alphas": [1.5]}}));
        let err = resolve(f, Overrides::default(), None).unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
    }

    #[test]
    fn flag_seed_wins() {
        let f = file(json!({"command": "simulate-tables", "seed": 3}));
        let o = Overrides {
            seed: Some(7),
            ..Default::default()
        };
        assert_eq!(resolve(f, o, None).unwrap().seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = serde_json::from_value::<ConfigFile>(json!({"command": "bl-distance", "sed": 1})).unwrap_err();
        assert!(err.to_string().contains("sed"));
        let f = file(json!({"command": "test-moments", "params": {"input": "x.csv", "alhpa": 0.1}}));
        let err = resolve(f, Overrides::default(), None).unwrap_err();
        assert!(err.to_string().contains("alhpa"), "{err}");
    }

    #[test]
    fn config_file_round_trip() {
        let f = file(json!({"command": "simulate-tables", "seed": 5, "params": {"mc_reps": 3, "deltas": [1.0]}}));
        let c = resolve(f, Overrides::default(), None).unwrap();
        let again = resolve(
            serde_json::from_value(c.to_config_file()).unwrap(),
            Overrides::default(),
            None,
        )
        .unwrap();
        assert_eq!(again, c);
        let f = file(json!({"command": "bl-distance", "params": {"left": "a", "right": "b"}}));
        let c = resolve(f, Overrides::default(), None).unwrap();
        let again = resolve(
            serde_json::from_value(c.to_config_file()).unwrap(),
            Overrides::default(),
            None,
        )
        .unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn output_dir_precedence() {
        let env = Some(PathBuf::from("from-env"));
        let f = file(json!({"command": "simulate-tables"}));
        assert_eq!(
            resolve(f.clone(), Overrides::default(), env.clone())
                .unwrap()
                .output_dir,
            PathBuf::from("from-env")
        );
        let f = file(json!({"command": "simulate-tables", "output_dir": "from-file"}));
        assert_eq!(
            resolve(f, Overrides::default(), env).unwrap().output_dir,
            PathBuf::from("from-file")
        );
    }
}
