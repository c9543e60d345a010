use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "epsrd",
    version,
    about = "Rate-distortion bounds for the epsilon-insensitive loss",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate bound curves over a slope or distortion grid.
    Bounds(Common),
    /// Report the SLB zero crossing and the zero-rate distortions.
    Dmax(Common),
    /// Run Blahut-Arimoto at each grid slope.
    Ba(Common),
    /// Cross-check the bounds against each other and against BA.
    Verify(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Bounds(c) | Command::Dmax(c) | Command::Ba(c) | Command::Verify(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitsArg {
    Nats,
    Bits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarArg {
    S,
    D,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// laplacian, gaussian or csv:PATH (columns x,mass on a uniform grid).
    #[arg(long, default_value = "laplacian")]
    pub source: String,
    /// Laplacian rate parameter.
    #[arg(long, allow_negative_numbers = true, default_value_t = std::f64::consts::SQRT_2)]
    pub alpha: f64,
    /// Gaussian variance.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Half-width of the insensitive band.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Lower grid end. Slopes may be given with either sign.
    #[arg(long, allow_negative_numbers = true, default_value_t = -200.0)]
    pub grid_min: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = -0.5)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 20)]
    pub grid_count: usize,
    #[arg(long, value_enum, default_value = "log")]
    pub grid_scale: ScaleArg,
    #[arg(long, value_enum, default_value = "s")]
    pub grid_var: VarArg,
    /// Comma-separated subset of slb,ru,rau,rge,trivial,ba, or `all`.
    #[arg(long, default_value = "slb,ru,rau,rge,trivial")]
    pub bounds: String,
    /// BA grid size (odd).
    #[arg(long, default_value_t = 2001)]
    pub ba_n: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub ba_tol: f64,
    /// BA iteration cap. Defaults to 200000, or 1000 for `verify`.
    #[arg(long)]
    pub ba_max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "nats")]
    pub units: UnitsArg,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// key=value file with defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Reads a `key = value` file into flag arguments. Blank lines and lines
/// starting with `#` are ignored; keys may use `_` or `-`; values may be quoted.
pub fn config_args(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key = value", n + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key '{key}'", n + 1));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(value));
    }
    Ok(out)
}

/// Position right after the subcommand name, where config arguments go so
/// that later command-line flags override them.
pub fn insertion_point(args: &[OsString]) -> Option<usize> {
    args.iter()
        .position(|a| matches!(a.to_str(), Some("bounds" | "dmax" | "ba" | "verify")))
        .map(|i| i + 1)
}

/// Value of `--config` in raw arguments.
pub fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}
