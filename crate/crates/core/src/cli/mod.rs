//! Command-line front end: `train`, `toy2d`, `msweep`, `bounds`, `regions`
//! and `eval`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure
//! (divergence, non-convergence of `train`, malformed or unusable data),
//! 3 I/O failure. `MARGINLAB_THREADS` caps the worker threads used for
//! seed- and margin-parallel runs.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, LossSettings};

pub const THREADS_ENV: &str = "MARGINLAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "marginlab",
    version,
    about = "Cosine-margin losses, their bounds, and toy experiments"
)]
pub struct Cli {
    /// Suppress progress and summary output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its trace, parameters and angular statistics.
    Train(RunArgs),
    /// Train 2-D feature models for several margins and write scatter data.
    Toy2d(SweepArgs),
    /// Held-out verification accuracy across a grid of margins.
    Msweep(SweepArgs),
    /// Lower bound on the scale and upper bound on the margin.
    Bounds(BoundsArgs),
    /// Two-class decision regions on an angle or cosine grid.
    Regions(RegionsArgs),
    /// Verification or identification metrics for a feature file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config; keys not given keep the command's defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated margins, e.g. `0,0.1,0.2`.
    #[arg(long, value_delimiter = ',')]
    pub m_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Number of classes C.
    #[arg(long)]
    pub classes: usize,
    /// Feature dimension K.
    #[arg(long)]
    pub dim: usize,
    /// Expected minimum posterior at the class centers.
    #[arg(long, default_value_t = 0.99)]
    pub p_w: f64,
    /// Scale to check against the lower bound.
    #[arg(long, default_value_t = 64.0)]
    pub s: f64,
    /// Margin to check against the upper bound.
    #[arg(long)]
    pub m: Option<f64>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionKind {
    Softmax,
    Nsl,
    Asoftmax,
    Lmcl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Angle,
    Cosine,
}

#[derive(Debug, Args)]
pub struct RegionsArgs {
    #[arg(long, value_enum)]
    pub loss: RegionKind,
    /// Cosine margin for `lmcl`.
    #[arg(long, default_value_t = 0.35)]
    pub m: f64,
    /// Weight norms `a,b` for `softmax`.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0])]
    pub norms: Vec<f64>,
    /// Angle multiplier for `asoftmax`.
    #[arg(long, default_value_t = 4.0)]
    pub multiplier: f64,
    /// Grid nodes per axis.
    #[arg(long, default_value_t = 512)]
    pub resolution: usize,
    /// Coordinate space; defaults to cosine for `lmcl`, angle otherwise.
    #[arg(long, value_enum)]
    pub space: Option<SpaceArg>,
    /// Output CSV.
    #[arg(long, default_value = "regions.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).multiple(false)))]
pub struct EvalArgs {
    /// Feature CSV: `label,f0,f1,...` (an `angle` column is ignored).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Verification pairs as row indices into the feature file: `index_a,index_b`.
    #[arg(long, group = "mode", requires = "features")]
    pub pairs: Option<PathBuf>,
    /// Identification roles as row indices: `index,role` with role `gallery` or `probe`.
    #[arg(long, group = "mode", requires = "features")]
    pub gallery: Option<PathBuf>,
    /// Self-contained verification pairs: `id_a,id_b,a_0..,b_0..`.
    #[arg(long, group = "mode", conflicts_with = "features")]
    pub pair_features: Option<PathBuf>,
    /// Self-contained gallery/probe file: `role,id,f0,...`.
    #[arg(long, group = "mode", conflicts_with = "features")]
    pub gallery_features: Option<PathBuf>,
    /// False accept rates for TAR@FAR.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.01, 0.001])]
    pub far: Vec<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Parses `args` (program name first) and runs the command, printing errors
/// to stderr. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a thread pool sized by `MARGINLAB_THREADS`.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker threads: {e}")))?;
    let out = Output { quiet: cli.quiet };
    pool.install(|| match &cli.command {
        Command::Train(a) => commands::train(a, &out),
        Command::Toy2d(a) => commands::toy2d(a, &out),
        Command::Msweep(a) => commands::msweep(a, &out),
        Command::Bounds(a) => commands::bounds(a, &out),
        Command::Regions(a) => commands::regions(a, &out),
        Command::Eval(a) => commands::eval(a, &out),
    })
}

pub(crate) struct Output {
    quiet: bool,
}

impl Output {
    pub(crate) fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
