//! Command runners. Each returns `Ok(())` or an error carrying its exit code.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use splineband::bands::build_bands;
use splineband::simulate::{run_monte_carlo, ComponentPlan};
use splineband::{
    BandConfig, BandResult, DgpConfig, FitOptions, OrthogonalModel, PenaltyConfig, SimulationError,
    SimulationReport, StudyConfig,
};

use crate::args::{parse_int_list, parse_interval, required, CvArgs, FitArgs, FixtureArgs, SimulateArgs};
use crate::cv::{cross_validate_df, CvSettings};
use crate::data::load_csv;
use crate::error::CliError;
use crate::output::{to_json, write_band_csv};
use crate::pipeline::fit_split;
use crate::fixture;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs `f` on a pool of `threads` workers, or the global pool when `None`.
fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Threads(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn penalty(c_lambda: Option<f64>) -> Result<PenaltyConfig, CliError> {
    let mut config = PenaltyConfig::default();
    if let Some(c) = c_lambda {
        config.c_lambda = c;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub data: PathBuf,
    pub response: String,
    pub component: String,
    pub n: usize,
    pub target_columns: usize,
    pub nuisance_columns: usize,
    pub theta_hat: Vec<f64>,
    pub c_alpha: f64,
    pub alpha: f64,
    pub bootstrap_draws: usize,
    pub seed: u64,
    pub interval: [f64; 2],
    pub grid_size: usize,
    pub lambda_outcome: f64,
    pub lambda_auxiliary: f64,
    pub support_outcome: usize,
    pub support_auxiliary: Vec<usize>,
    pub max_abs_score: f64,
    pub mean_width: f64,
    pub options: FitOptions,
    pub linear: Vec<String>,
}

impl FitSummary {
    fn new(
        args: &ResolvedFit,
        model: &OrthogonalModel,
        band: &BandResult,
        band_config: &BandConfig,
    ) -> Self {
        let nuisance = &model.nuisance;
        Self {
            data: args.data.clone(),
            response: args.response.clone(),
            component: args.component.clone(),
            n: model.n(),
            target_columns: model.design.d1(),
            nuisance_columns: model.design.d2(),
            theta_hat: model.theta_hat.iter().copied().collect(),
            c_alpha: band.c_alpha,
            alpha: band.alpha,
            bootstrap_draws: band.bootstrap_draws,
            seed: band.seed,
            interval: [band_config.interval_lo, band_config.interval_hi],
            grid_size: band.grid.len(),
            lambda_outcome: nuisance.outcome_fit.lambda,
            lambda_auxiliary: nuisance.auxiliary_fits.first().map_or(0.0, |f| f.lambda),
            support_outcome: nuisance.outcome_fit.support.len(),
            support_auxiliary: nuisance.auxiliary_fits.iter().map(|f| f.support.len()).collect(),
            max_abs_score: model.max_score(),
            mean_width: band.mean_width(),
            options: args.options.clone(),
            linear: args.linear.clone(),
        }
    }
}

struct ResolvedFit {
    data: PathBuf,
    response: String,
    component: String,
    options: FitOptions,
    linear: Vec<String>,
    interval: Option<(f64, f64)>,
    band: BandConfig,
    out: Option<PathBuf>,
    summary: Option<PathBuf>,
}

fn resolve_fit(args: FitArgs) -> Result<ResolvedFit, CliError> {
    let defaults = BandConfig::default();
    let band = BandConfig {
        grid_size: args.grid.unwrap_or(defaults.grid_size),
        alpha: args.alpha.unwrap_or(defaults.alpha),
        bootstrap_draws: args.bootstrap.unwrap_or(defaults.bootstrap_draws),
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    band.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let options = FitOptions {
        df_own: required(args.df_own, "df-own")?,
        df_other: required(args.df_other, "df-other")?,
        degree: args.degree.unwrap_or(3),
        penalty: penalty(args.c_lambda)?,
        ..FitOptions::default()
    };
    let summary = args
        .summary
        .or_else(|| args.out.as_ref().map(|p| p.with_extension("json")));
    Ok(ResolvedFit {
        data: required(args.data, "data")?,
        response: required(args.target, "target")?,
        component: required(args.component, "component")?,
        options,
        linear: args.linear.unwrap_or_default(),
        interval: args.interval.as_deref().map(parse_interval).transpose()?,
        band,
        out: args.out,
        summary,
    })
}

pub fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let threads = args.threads;
    let fit = resolve_fit(args)?;
    let table = load_csv(&fit.data, &fit.response)?;
    let split = table.split(&fit.response, &fit.component)?;

    let (model, band, band_config) = with_threads(threads, || -> Result<_, CliError> {
        let model = fit_split(&split, &fit.options, &fit.linear)?;
        let (lo, hi) = fit.interval.unwrap_or_else(|| model.design.target_spec.support());
        let band_config = BandConfig {
            interval_lo: lo,
            interval_hi: hi,
            ..fit.band.clone()
        };
        let band = build_bands(&model, &band_config)?;
        Ok((model, band, band_config))
    })??;

    match &fit.out {
        Some(path) => {
            let mut w = create(path)?;
            write_band_csv(&band, &mut w)?;
            w.flush().map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
        }
        None => write_band_csv(&band, std::io::stdout().lock())?,
    }
    let summary = FitSummary::new(&fit, &model, &band, &band_config);
    if let Some(path) = &fit.summary {
        write_text(path, &to_json(&summary)?)?;
    }
    eprintln!(
        "{}: c_alpha = {:.4}, mean width = {:.4}, outcome support {} of {}",
        fit.component,
        band.c_alpha,
        band.mean_width(),
        summary.support_outcome,
        model.design.z.ncols()
    );
    Ok(())
}

/// Builds the study from flags; configuration problems are usage errors.
pub fn study_from_args(args: &SimulateArgs) -> Result<StudyConfig, CliError> {
    let dgp = DgpConfig {
        n: required(args.n, "n")?,
        p: required(args.p, "p")?,
        seed: args.seed.unwrap_or(0),
        ..DgpConfig::default()
    };
    let reps = required(args.reps, "reps")?;
    let mut study = StudyConfig::new(dgp, reps);
    let wanted = match &args.components {
        Some(text) => parse_int_list(text, "components")?,
        None => (1..=5).collect(),
    };
    let table = ComponentPlan::defaults(study.dgp.n, study.dgp.p, study.dgp.p, (7, 4));
    study.components = wanted
        .iter()
        .map(|&j| {
            let base = table.get(j.wrapping_sub(1)).copied().unwrap_or(ComponentPlan {
                component: j,
                df_own: 7,
                df_other: 4,
            });
            ComponentPlan {
                component: j,
                df_own: args.df_own.unwrap_or(base.df_own),
                df_other: args.df_other.unwrap_or(base.df_other),
            }
        })
        .collect();
    if let Some(alpha) = args.alpha {
        study.band.alpha = alpha;
    }
    if let Some(interval) = &args.interval {
        (study.band.interval_lo, study.band.interval_hi) = parse_interval(interval)?;
    }
    if let Some(grid) = args.grid {
        study.band.grid_size = grid;
    }
    if let Some(b) = args.bootstrap {
        study.band.bootstrap_draws = b;
    }
    study.penalty = penalty(args.c_lambda)?;
    study.validate().map_err(|e| match e {
        SimulationError::InvalidConfiguration(msg) => CliError::Usage(msg),
        other => other.into(),
    })?;
    Ok(study)
}

/// Coverage table with one row per component.
pub fn format_report(report: &SimulationReport) -> String {
    let dgp = &report.config.dgp;
    let mut s = format!(
        "n = {}, p = {}, R = {}, alpha = {}\n{:<10}{:>8}{:>10}{:>12}{:>10}\n",
        dgp.n, dgp.p, report.replications, report.config.band.alpha, "component", "df", "coverage", "mean width", "failures"
    );
    for c in &report.components {
        s.push_str(&format!(
            "{:<10}{:>8}{:>10.3}{:>12.4}{:>10}\n",
            format!("f{}", c.component),
            format!("{}/{}", c.df_own, c.df_other),
            c.coverage,
            c.mean_width,
            c.failures
        ));
    }
    s
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let study = study_from_args(&args)?;
    let report = with_threads(args.threads, || run_monte_carlo(&study))??;
    let json = to_json(&report)?;
    let table = format_report(&report);
    match &args.out {
        Some(path) => {
            write_text(path, &json)?;
            print!("{table}");
        }
        None => {
            print!("{json}");
            eprint!("{table}");
        }
    }
    eprintln!("wall clock: {:.1} s", report.wall_clock_seconds);
    Ok(())
}

pub fn cmd_cv(args: CvArgs) -> Result<(), CliError> {
    let args = args.resolve()?;
    let settings = CvSettings {
        response: required(args.target, "target")?,
        component: required(args.component, "component")?,
        own_grid: parse_int_list(&required(args.own_grid, "own-grid")?, "own-grid")?,
        other_grid: parse_int_list(&required(args.other_grid, "other-grid")?, "other-grid")?,
        folds: args.folds.unwrap_or(5),
        seed: args.seed.unwrap_or(0),
        fit: FitOptions {
            degree: args.degree.unwrap_or(3),
            penalty: penalty(args.c_lambda)?,
            ..FitOptions::default()
        },
        linear: args.linear.unwrap_or_default(),
    };
    let data = required(args.data, "data")?;
    let table = load_csv(&data, &settings.response)?;
    let result = with_threads(args.threads, || cross_validate_df(&table, &settings))??;
    let json = to_json(&result)?;
    match &args.out {
        Some(path) => write_text(path, &json)?,
        None => print!("{json}"),
    }
    println!(
        "{}: df_own = {}, df_other = {} (CV MSE {:.6})",
        result.component, result.best_df_own, result.best_df_other, result.best_mse
    );
    Ok(())
}

pub fn cmd_fixture(args: FixtureArgs) -> Result<(), CliError> {
    if args.rows < crate::data::MIN_ROWS {
        return Err(CliError::Usage(format!("--rows must be at least {}", crate::data::MIN_ROWS)));
    }
    let rows = fixture::generate(args.rows, args.seed);
    let mut w = create(&args.out)?;
    fixture::write_csv(&rows, &mut w)?;
    w.flush().map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim_args() -> SimulateArgs {
        SimulateArgs {
            n: Some(100),
            p: Some(50),
            reps: Some(2),
            ..SimulateArgs::default()
        }
    }

    #[test]
    fn study_uses_tabulated_df() {
        let study = study_from_args(&sim_args()).unwrap();
        let df: Vec<_> = study.components.iter().map(|c| (c.df_own, c.df_other)).collect();
        assert_eq!(df, [(7, 4), (6, 4), (7, 4), (5, 4), (7, 4)]);
    }

    #[test]
    fn df_flags_override_every_component() {
        let args = SimulateArgs {
            df_own: Some(5),
            components: Some("1,5".into()),
            ..sim_args()
        };
        let study = study_from_args(&args).unwrap();
        assert_eq!(study.components.len(), 2);
        assert!(study.components.iter().all(|c| c.df_own == 5 && c.df_other == 4));
    }

    #[test]
    fn small_p_is_a_usage_error() {
        let args = SimulateArgs { p: Some(3), ..sim_args() };
        let err = study_from_args(&args).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_USAGE);
    }

    #[test]
    fn bad_band_settings_are_usage_errors() {
        for args in [
            SimulateArgs { alpha: Some(1.5), ..sim_args() },
            SimulateArgs { bootstrap: Some(10), ..sim_args() },
            SimulateArgs { interval: Some(vec![-3.0, 2.0]), ..sim_args() },
            SimulateArgs { c_lambda: Some(0.5), ..sim_args() },
        ] {
            assert!(matches!(study_from_args(&args), Err(CliError::Usage(_))));
        }
    }

    #[test]
    fn report_table_has_a_row_per_component() {
        let study = study_from_args(&SimulateArgs { reps: Some(1), components: Some("1".into()), ..sim_args() }).unwrap();
        let report = run_monte_carlo(&study).unwrap();
        let table = format_report(&report);
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().nth(2).unwrap().starts_with("f1"));
    }
}
