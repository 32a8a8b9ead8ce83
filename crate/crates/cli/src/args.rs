//! Command-line flags, and the JSON config file that mirrors them.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::target::Target;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "DRAWDOWN_LAB_THREADS";

#[derive(Debug, Clone, Parser)]
#[command(
    name = "drawdown-lab",
    version,
    about = "Drawdown, drawup and occupation-time laws of one-dimensional diffusions",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Evaluate a law over a parameter grid.
    Law(LawArgs),
    /// Price a default or drawdown product over a parameter grid.
    Price(LawArgs),
    /// Estimate a law or product by Monte Carlo.
    Simulate(SimulateArgs),
    /// Compare independent routes to the same quantity.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LawArgs {
    pub target: Target,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    pub target: Target,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    pub suite: Suite,
    /// Law or product compared by the `mc` suite.
    #[arg(long)]
    pub target: Option<Target>,
    /// Relative tolerance of the analytic comparisons.
    #[arg(long, default_value_t = 1e-6)]
    pub rel_tol: f64,
    /// Absolute tolerance of the route comparison.
    #[arg(long, default_value_t = 1e-7)]
    pub abs_tol: f64,
    /// Standard errors allowed between an analytic value and its Monte Carlo estimate.
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
    /// Add a two-sample Kolmogorov-Smirnov check to the identity-in-law suite.
    #[arg(long)]
    pub ks: bool,
    /// Significance level of the Kolmogorov-Smirnov check.
    #[arg(long, default_value_t = 0.01)]
    pub ks_level: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Time spent by the drawdown above y before the drawdown time of a, against the drawdown time of a - y.
    IdentityInLaw,
    /// Analytic value against a Monte Carlo estimate.
    Mc,
    /// The two formula routes for the ordering probabilities at a = b.
    BranchContinuity,
    /// Drawdown first + drawup first + clock first = 1.
    Partition,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::IdentityInLaw => "identity-in-law",
            Suite::Mc => "mc",
            Suite::BranchContinuity => "branch-continuity",
            Suite::Partition => "partition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Bm,
    Bes3,
    Custom,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Bm)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Drift of a custom model as an expression in x.
    #[arg(long, allow_hyphen_values = true)]
    pub drift: Option<String>,
    /// Volatility of a custom model as an expression in x.
    #[arg(long, allow_hyphen_values = true)]
    pub vol: Option<String>,
    /// Left end of a custom model's state interval.
    #[arg(long, allow_hyphen_values = true)]
    pub left: Option<f64>,
    /// Interval `lo:hi` on which a custom model's eigenfunctions are computed.
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Normalization point of a custom model; defaults to the window midpoint.
    #[arg(long, allow_hyphen_values = true)]
    pub reference: Option<f64>,
    /// Relative quadrature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Every grid is a comma list of numbers and `start:stop:step` ranges.
#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Starting point.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Rate of the exponential horizon.
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Rate attached to occupation time.
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<String>,
    /// Drawdown size.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<String>,
    /// Drawup size.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    /// Level of the running minimum or maximum.
    #[arg(long, allow_hyphen_values = true)]
    pub level: Option<String>,
    /// Time horizon or maturity.
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<String>,
    /// Occupation strike.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    /// Interest rate.
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<String>,
    /// Quantile level.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Payoff cap of the quantile option; omitted means a linear payoff.
    #[arg(long, allow_hyphen_values = true)]
    pub cap: Option<String>,
    /// Largest number of grid points accepted.
    #[arg(long, default_value_t = 100_000)]
    pub max_evals: usize,
}

impl GridArgs {
    pub fn get(&self, name: &str) -> Option<&str> {
        let v = match name {
            "x" => &self.x,
            "q" => &self.q,
            "p" => &self.p,
            "y" => &self.y,
            "z" => &self.z,
            "a" => &self.a,
            "b" => &self.b,
            "level" => &self.level,
            "t" => &self.t,
            "k" => &self.k,
            "r" => &self.r,
            "alpha" => &self.alpha,
            "cap" => &self.cap,
            _ => return None,
        };
        v.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    /// Exact Gaussian steps for bm, exact 3-d norm steps for bes3, Euler otherwise.
    Auto,
    Euler,
    ExactGaussian,
    ExactNorm3d,
}

#[derive(Debug, Clone, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Auto)]
    pub scheme: SchemeArg,
    /// Detect crossings between grid points with Brownian bridges.
    #[arg(long)]
    pub bridge: bool,
    /// Paths still running at this time are censored.
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    /// Paths in the step-halving diagnostic; 0 disables it.
    #[arg(long)]
    pub richardson: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write here instead of standard output.
    #[arg(long, short)]
    pub output: Option<std::path::PathBuf>,
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// JSON object of flag values; flags on the command line win.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
}

/// Splices the flags of any `--config FILE` into the argument list, right after the
/// subcommand, so that explicit flags given later take precedence.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            match it.next() {
                Some(p) => path = Some(p),
                None => return Err(CliError::Invalid("--config needs a file".into())),
            }
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config { path: path.clone(), reason: e.to_string() })?;
    let flags = config_flags(&text).map_err(|reason| CliError::Config { path, reason })?;
    // program name and subcommand come first
    let at = rest.len().min(2);
    rest.splice(at..at, flags);
    Ok(rest)
}

fn config_flags(text: &str) -> std::result::Result<Vec<String>, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let Value::Object(map) = value else {
        return Err("expected a JSON object of flag values".into());
    };
    let mut out = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            Value::Bool(true) => out.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Number(n) => out.push(format!("{flag}={n}")),
            Value::String(s) => out.push(format!("{flag}={s}")),
            Value::Array(items) => {
                let parts: std::result::Result<Vec<String>, String> = items
                    .iter()
                    .map(|item| match item {
                        Value::Number(n) => Ok(n.to_string()),
                        Value::String(s) => Ok(s.clone()),
                        _ => Err(format!("{key}: list entries must be numbers or strings")),
                    })
                    .collect();
                out.push(format!("{flag}={}", parts?.join(",")));
            }
            Value::Object(_) => return Err(format!("{key}: nested objects are not flags")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_flags_are_spliced_after_the_subcommand() {
        let dir = std::env::temp_dir().join(format!("drawdown-lab-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let file = dir.join("c.json");
        std::fs::write(&file, r#"{"q": [0.5, 1], "a": 2, "bridge": true, "format": "csv"}"#).unwrap();
        let args: Vec<String> =
            ["drawdown-lab", "law", "--config", file.to_str().unwrap(), "drawdown-transform", "--a", "1"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        let out = expand_config(args).unwrap();
        assert_eq!(out[..2], ["drawdown-lab", "law"]);
        assert!(out.contains(&"--q=0.5,1".to_string()));
        assert!(out.contains(&"--bridge".to_string()));
        // the explicit flag comes after the spliced one, so it wins
        let a_cfg = out.iter().position(|s| s == "--a=2").unwrap();
        let a_cli = out.iter().position(|s| s == "--a").unwrap();
        assert!(a_cli > a_cfg);
    }
}
