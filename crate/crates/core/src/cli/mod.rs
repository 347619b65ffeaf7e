//! Batch front end: `ddboot <command> [--config file.json] [flags]`.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, bad
//! configuration, unreadable or malformed input) and 2 when a statistical
//! pipeline fails.

mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    resolve, CommandKind, ConfigFile, Overrides, Params, Profile, RunConfig, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Pipeline(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ddboot",
    version,
    about = "Directional delta method inference and Monte Carlo tables"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: $DDBOOT_OUTPUT_DIR or ./ddboot-output].
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Budget profile of simulate-tables.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo rejection-rate tables of the monotonicity test.
    SimulateTables,
    /// Monotone quantile treatment effect test on a CSV with columns Y, D, Z1..Zk.
    TestMonotone {
        /// Input CSV with a header row.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Moment inequality test `E[X_j] <= 0` on a CSV of moment columns.
    TestMoments {
        /// Input CSV with a header row.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// First-order dominance of group 1 over group 2 (CSV columns group, value).
    TestDominance {
        /// Input CSV with a header row.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Standard versus modified bootstrap laws and the invariance probe.
    DiagnoseBootstrap {
        /// Input CSV with a header row.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Distance between the empirical laws of two sample files.
    BlDistance {
        left: Option<PathBuf>,
        right: Option<PathBuf>,
        /// `bl` or `ks`.
        #[arg(long)]
        metric: Option<String>,
    },
}

fn path_value(p: &Path) -> serde_json::Value {
    serde_json::Value::String(p.display().to_string())
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let mut params = serde_json::Map::new();
        let mut put = |k: &str, v: Option<serde_json::Value>| {
            if let Some(v) = v {
                params.insert(k.to_string(), v);
            }
        };
        let command = self.command.as_ref().map(|c| match c {
            Command::SimulateTables => CommandKind::SimulateTables,
            Command::TestMonotone { input } => {
                put("input", input.as_deref().map(path_value));
                CommandKind::TestMonotone
            }
            Command::TestMoments { input } => {
                put("input", input.as_deref().map(path_value));
                CommandKind::TestMoments
            }
            Command::TestDominance { input } => {
                put("input", input.as_deref().map(path_value));
                CommandKind::TestDominance
            }
            Command::DiagnoseBootstrap { input } => {
                put("input", input.as_deref().map(path_value));
                CommandKind::DiagnoseBootstrap
            }
            Command::BlDistance { left, right, metric } => {
                put("left", left.as_deref().map(path_value));
                put("right", right.as_deref().map(path_value));
                put("metric", metric.clone().map(serde_json::Value::String));
                CommandKind::BlDistance
            }
        });
        Overrides {
            command,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            profile: self.profile,
            params,
        }
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves the configuration and dispatches; returns the line to print.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(p) => config::read_config_file(p)?,
        None => ConfigFile::default(),
    };
    let env_output = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let config = resolve(file, cli.overrides(), env_output)?;
    match cli.workers {
        Some(0) => Err(CliError::Usage("`workers` must be positive".to_string())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {w} workers: {e}")))?;
            pool.install(|| dispatch(&config))
        }
        None => dispatch(&config),
    }
}

/// Runs a resolved configuration, writing results and `manifest.json`.
pub fn dispatch(config: &RunConfig) -> Result<String, CliError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config.output_dir.display())))?;
    let out = commands::run_command(config)?;
    write_manifest(config, &out.files, &out.inputs)?;
    Ok(out.message)
}

#[derive(Serialize)]
struct FileDigest {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    /// Effective configuration; pass it back with `--config` to reproduce
    /// every output.
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(crate::Error::from)?;
    Ok(sha256_hex(&bytes))
}

fn write_manifest(config: &RunConfig, files: &[String], inputs: &[PathBuf]) -> Result<(), CliError> {
    let effective = config.to_config_file();
    let canonical = serde_json::to_vec(&effective).map_err(crate::Error::from)?;
    let outputs = files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                name: f.clone(),
                sha256: digest_file(&config.output_dir.join(f))?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(FileDigest {
                name: p.display().to_string(),
                sha256: digest_file(p)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: config.command.name(),
        config_sha256: sha256_hex(&canonical),
        config: effective,
        inputs,
        outputs,
    };
    let f = std::fs::File::create(config.output_dir.join("manifest.json")).map_err(crate::Error::from)?;
    crate::io::write_json(std::io::BufWriter::new(f), &manifest)?;
    Ok(())
}
