//! Command-line flags and the optional TOML config file.
//!
//! Every flag is optional at parse time so that a config file can supply it;
//! flags given on the command line take precedence over file values.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "splineband", version, about = "Simultaneous confidence bands for one component of an additive model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one component of a CSV table and write its band.
    Fit(FitArgs),
    /// Monte Carlo coverage study on the synthetic design.
    Simulate(SimulateArgs),
    /// Cross-validate the spline degrees of freedom for one component.
    Cv(CvArgs),
    /// Write the synthetic housing-style table.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitArgs {
    /// TOML file whose `[fit]` table supplies defaults for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    pub target: Option<String>,
    /// Column whose component is estimated.
    #[arg(long)]
    pub component: Option<String>,
    #[arg(long)]
    pub df_own: Option<usize>,
    #[arg(long)]
    pub df_other: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Band interval; defaults to the observed range of the component.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,
    /// Bootstrap draws.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Band CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON summary path; defaults to the band path with a `.json` extension.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Columns entering linearly rather than through a spline (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub linear: Option<Vec<String>>,
    #[arg(long)]
    pub c_lambda: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// TOML file whose `[simulate]` table supplies defaults for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Own degrees of freedom for every component; tabulated values otherwise.
    #[arg(long)]
    pub df_own: Option<usize>,
    #[arg(long)]
    pub df_other: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub interval: Option<Vec<f64>>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Components to study, e.g. `1..5` or `1,4,5`.
    #[arg(long)]
    pub components: Option<String>,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub c_lambda: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CvArgs {
    /// TOML file whose `[cv]` table supplies defaults for these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub component: Option<String>,
    /// e.g. `4,5,6,7` or `4..7`.
    #[arg(long)]
    pub own_grid: Option<String>,
    #[arg(long)]
    pub other_grid: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub linear: Option<Vec<String>>,
    #[arg(long)]
    pub c_lambda: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::fixture::DEFAULT_ROWS)]
    pub rows: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    fit: FitArgs,
    simulate: SimulateArgs,
    cv: CvArgs,
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

macro_rules! overlay {
    ($flags:expr, $file:expr; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )+
    };
}

impl FitArgs {
    /// Fills unset flags from the config file, if one was given.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(path) = &self.config {
            let file = read_config(path)?.fit;
            overlay!(self, file; data, target, component, df_own, df_other, degree, alpha, grid,
                interval, bootstrap, seed, out, summary, linear, c_lambda, threads);
        }
        Ok(self)
    }
}

impl SimulateArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(path) = &self.config {
            let file = read_config(path)?.simulate;
            overlay!(self, file; n, p, reps, df_own, df_other, alpha, interval, grid, bootstrap,
                seed, components, out, c_lambda, threads);
        }
        Ok(self)
    }
}

impl CvArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(path) = &self.config {
            let file = read_config(path)?.cv;
            overlay!(self, file; data, target, component, own_grid, other_grid, folds, degree,
                seed, out, linear, c_lambda, threads);
        }
        Ok(self)
    }
}

/// Value of a required flag or a usage error naming it.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

/// Parses `a,b,c` or `a..b` (inclusive) into a sorted, de-duplicated list.
pub fn parse_int_list(text: &str, flag: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("--{flag}: cannot parse {text:?} as a list like 4,5,6 or 4..6"));
    let text = text.trim();
    if text.is_empty() {
        return Err(CliError::Usage(format!("--{flag} must not be empty")));
    }
    let mut values = if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect::<Vec<_>>()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?
    };
    values.sort_unstable();
    values.dedup();
    Ok(values)
}

/// `[lo, hi]` from a two-element flag value.
pub fn parse_interval(values: &[f64]) -> Result<(f64, f64), CliError> {
    match values {
        [lo, hi] if lo.is_finite() && hi.is_finite() && lo < hi => Ok((*lo, *hi)),
        _ => Err(CliError::Usage(format!("--interval needs LO < HI, got {values:?}"))),
    }
}
