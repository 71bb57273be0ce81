//! Synthetic additive-model data and the Monte Carlo coverage study.
//!
//! Covariates are correlated uniforms on `[-2.5, 2.5]` built from a Gaussian
//! copula with Toeplitz latent correlation `ρ^|k-l|`. The response is the sum
//! of four fixed component functions plus heteroscedastic Gaussian noise.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bands::{build_bands, covers, BandConfig};
use crate::lasso::PenaltyConfig;
use crate::numeric::normal_cdf;
use crate::orthogonal::{fit_model, FitOptions, JacobianForm};
use crate::rng::{mix_seed, stream};

pub const SUPPORT_LO: f64 = -2.5;
pub const SUPPORT_HI: f64 = 2.5;
/// Largest tolerated share of failed replications per component.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

pub fn default_sigma_bar() -> f64 {
    (12.0f64 / 67.0).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid simulation configuration: {0}")]
    InvalidConfiguration(String),

    #[error("latent correlation matrix is not positive definite (base {0})")]
    DegenerateCorrelation(f64),

    #[error("study aborted: component {component} failed in {failures} of {replications} replications (first error: {first_error})")]
    Aborted {
        component: usize,
        failures: usize,
        replications: usize,
        first_error: String,
    },
}

/// Which covariate scales the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDriver {
    /// The covariate whose component is being estimated.
    Target,
    /// A fixed 1-based covariate index.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub corr_base: f64,
    pub sigma_bar: f64,
    pub noise_driver: NoiseDriver,
    /// 1-based indices of the nonzero components (subset of 1..=4).
    pub active: Vec<usize>,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 50,
            corr_base: 0.5,
            sigma_bar: default_sigma_bar(),
            noise_driver: NoiseDriver::Target,
            active: vec![1, 2, 3, 4],
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::InvalidConfiguration(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.p < 4 {
            return bad(format!("p must be at least 4, got {}", self.p));
        }
        if !(0.0..1.0).contains(&self.corr_base) {
            return bad(format!("correlation base must lie in [0, 1), got {}", self.corr_base));
        }
        if !(self.sigma_bar >= 0.0 && self.sigma_bar.is_finite()) {
            return bad(format!("noise scale must be finite and nonnegative, got {}", self.sigma_bar));
        }
        if let NoiseDriver::Fixed(j) = self.noise_driver {
            if j == 0 || j > self.p {
                return bad(format!("noise driver {j} outside 1..={}", self.p));
            }
        }
        if let Some(&j) = self.active.iter().find(|&&j| !(1..=4).contains(&j)) {
            return bad(format!("active component {j} outside 1..=4"));
        }
        Ok(())
    }

    /// Component `j` as generated, i.e. zero when inactive.
    pub fn component(&self, j: usize, x: f64) -> f64 {
        if self.active.contains(&j) {
            true_f(j, x)
        } else {
            0.0
        }
    }
}

/// The fixed component functions; `j` is 1-based and every `j >= 5` is zero.
pub fn true_f(j: usize, x: f64) -> f64 {
    match j {
        1 => -(2.0 * x).sin(),
        2 => x * x - 25.0 / 12.0,
        3 => x,
        4 => (-x).exp() - 0.4 * 2.5f64.sinh(),
        _ => 0.0,
    }
}

/// Correlated uniforms on the support via the Gaussian copula.
pub fn gen_design<R: Rng + ?Sized>(config: &DgpConfig, rng: &mut R) -> Result<DMatrix<f64>, SimulationError> {
    config.validate()?;
    let p = config.p;
    let corr = DMatrix::from_fn(p, p, |k, l| config.corr_base.powi(k.abs_diff(l) as i32));
    let chol = corr
        .cholesky()
        .ok_or(SimulationError::DegenerateCorrelation(config.corr_base))?;
    let lower = chol.l();
    // Row-major draws so each row consumes one contiguous block of the stream.
    let mut e = DMatrix::<f64>::zeros(config.n, p);
    for i in 0..config.n {
        for j in 0..p {
            e[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let z = e * lower.transpose();
    let width = SUPPORT_HI - SUPPORT_LO;
    Ok(z.map(|v| SUPPORT_LO + width * normal_cdf(v)))
}

/// `y_i = Σ_j f_j(X_ij) + σ̄ (1 + |X_i,driver|) ε_i`; `driver` is 1-based.
pub fn gen_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    config: &DgpConfig,
    driver: usize,
    rng: &mut R,
) -> Result<DVector<f64>, SimulationError> {
    if driver == 0 || driver > x.ncols() {
        return Err(SimulationError::InvalidConfiguration(format!(
            "noise driver {driver} outside 1..={}",
            x.ncols()
        )));
    }
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        let signal: f64 = config.active.iter().map(|&j| true_f(j, x[(i, j - 1)])).sum();
        let eps: f64 = rng.sample(StandardNormal);
        signal + config.sigma_bar * (1.0 + x[(i, driver - 1)].abs()) * eps
    }))
}

/// Tabulated `(own, other)` spline degrees of freedom for components 1..=5.
pub fn tabulated_df(n: usize, p: usize) -> Option<[(usize, usize); 5]> {
    match (n, p) {
        (100, 50) => Some([(7, 4), (6, 4), (7, 4), (5, 4), (7, 4)]),
        (100, 150) => Some([(7, 4), (6, 4), (6, 4), (5, 4), (5, 4)]),
        (1000, 50) => Some([(7, 4), (6, 5), (5, 4), (5, 4), (5, 4)]),
        (1000, 150) => Some([(7, 4), (6, 5), (7, 4), (5, 5), (4, 4)]),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPlan {
    /// 1-based covariate index.
    pub component: usize,
    pub df_own: usize,
    pub df_other: usize,
}

impl ComponentPlan {
    /// Plans for components `1..=count`, taking tabulated values where available.
    pub fn defaults(n: usize, p: usize, count: usize, fallback: (usize, usize)) -> Vec<Self> {
        let table = tabulated_df(n, p);
        (1..=count)
            .map(|component| {
                let (df_own, df_other) = table
                    .and_then(|t| t.get(component - 1).copied())
                    .unwrap_or(fallback);
                ComponentPlan {
                    component,
                    df_own,
                    df_other,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dgp: DgpConfig,
    pub replications: usize,
    pub components: Vec<ComponentPlan>,
    pub degree: usize,
    pub penalty: PenaltyConfig,
    pub jacobian: JacobianForm,
    /// Seed field is ignored; each band gets a derived seed.
    pub band: BandConfig,
}

impl StudyConfig {
    pub fn new(dgp: DgpConfig, replications: usize) -> Self {
        let components = ComponentPlan::defaults(dgp.n, dgp.p, 5, (7, 4));
        Self {
            dgp,
            replications,
            components,
            degree: 3,
            penalty: PenaltyConfig::default(),
            jacobian: JacobianForm::default(),
            band: BandConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        self.dgp.validate()?;
        let bad = |msg: String| Err(SimulationError::InvalidConfiguration(msg));
        if self.replications == 0 {
            return bad("need at least one replication".into());
        }
        if self.components.is_empty() {
            return bad("no components requested".into());
        }
        if let Some(c) = self.components.iter().find(|c| c.component == 0 || c.component > self.dgp.p) {
            return bad(format!("component {} outside 1..={}", c.component, self.dgp.p));
        }
        if !(self.band.interval_lo > SUPPORT_LO && self.band.interval_hi < SUPPORT_HI) {
            return bad(format!(
                "interval [{}, {}] must lie inside ({SUPPORT_LO}, {SUPPORT_HI})",
                self.band.interval_lo, self.band.interval_hi
            ));
        }
        self.band
            .validate()
            .map_err(|e| SimulationError::InvalidConfiguration(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub component: usize,
    pub df_own: usize,
    pub df_other: usize,
    /// `covered / successes`.
    pub coverage: f64,
    pub covered: usize,
    pub successes: usize,
    pub failures: usize,
    /// Average band width over the grid and successful replications.
    pub mean_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: StudyConfig,
    pub replications: usize,
    pub components: Vec<ComponentRecord>,
    /// Kept out of serialized output so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl SimulationReport {
    pub fn component(&self, j: usize) -> Option<&ComponentRecord> {
        self.components.iter().find(|c| c.component == j)
    }
}

/// Outcome of one component in one replication.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationOutcome {
    Done { covered: bool, mean_width: f64 },
    Failed(String),
}

/// Seed of replication `r` (1-based).
pub fn replication_seed(master: u64, r: usize) -> u64 {
    mix_seed(master, r as u64)
}

/// Data for replication `r` and target `component`; the design and the
/// standard-normal noise draws are shared across components.
pub fn replication_data(
    dgp: &DgpConfig,
    r: usize,
    component: usize,
) -> Result<(DMatrix<f64>, DVector<f64>), SimulationError> {
    let seed = replication_seed(dgp.seed, r);
    let x = gen_design(dgp, &mut stream(seed, 0))?;
    let driver = match dgp.noise_driver {
        NoiseDriver::Target => component,
        NoiseDriver::Fixed(j) => j,
    };
    let y = gen_response(&x, dgp, driver, &mut stream(seed, 1))?;
    Ok((x, y))
}

/// Target column and the remaining columns, in order.
pub fn split_target(x: &DMatrix<f64>, component: usize) -> (Vec<f64>, DMatrix<f64>) {
    let target = x.column(component - 1).iter().copied().collect();
    (target, x.clone().remove_column(component - 1))
}

fn run_component(study: &StudyConfig, r: usize, plan: &ComponentPlan) -> ReplicationOutcome {
    let attempt = || -> Result<(bool, f64), String> {
        let (x, y) = replication_data(&study.dgp, r, plan.component).map_err(|e| e.to_string())?;
        let (target, others) = split_target(&x, plan.component);
        let options = FitOptions {
            df_own: plan.df_own,
            df_other: plan.df_other,
            degree: study.degree,
            penalty: study.penalty.clone(),
            jacobian: study.jacobian,
        };
        let model = fit_model(&target, &others, y.as_slice(), &options).map_err(|e| e.to_string())?;
        let band_config = BandConfig {
            seed: mix_seed(replication_seed(study.dgp.seed, r), plan.component as u64),
            ..study.band.clone()
        };
        let band = build_bands(&model, &band_config).map_err(|e| e.to_string())?;
        let truth: Vec<f64> = band.grid.iter().map(|&g| study.dgp.component(plan.component, g)).collect();
        let covered = covers(&band, &truth).map_err(|e| e.to_string())?;
        Ok((covered, band.mean_width()))
    };
    match attempt() {
        Ok((covered, mean_width)) => ReplicationOutcome::Done { covered, mean_width },
        Err(e) => ReplicationOutcome::Failed(e),
    }
}

/// All outcomes for replication `r`, one per planned component.
pub fn run_replication(study: &StudyConfig, r: usize) -> Vec<ReplicationOutcome> {
    study
        .components
        .iter()
        .map(|plan| run_component(study, r, plan))
        .collect()
}

pub fn run_monte_carlo(study: &StudyConfig) -> Result<SimulationReport, SimulationError> {
    study.validate()?;
    let start = Instant::now();
    let outcomes: Vec<Vec<ReplicationOutcome>> = (1..=study.replications)
        .into_par_iter()
        .map(|r| run_replication(study, r))
        .collect();
    let components = aggregate(study, &outcomes)?;
    Ok(SimulationReport {
        config: study.clone(),
        replications: study.replications,
        components,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-component summaries; `outcomes[r][c]` is replication `r + 1`, plan `c`.
pub fn aggregate(
    study: &StudyConfig,
    outcomes: &[Vec<ReplicationOutcome>],
) -> Result<Vec<ComponentRecord>, SimulationError> {
    let mut records = Vec::with_capacity(study.components.len());
    for (c, plan) in study.components.iter().enumerate() {
        let mut covered = 0;
        let mut successes = 0;
        let mut failures = 0;
        let mut width_sum = 0.0;
        let mut first_error = None;
        for rep in outcomes {
            match &rep[c] {
                ReplicationOutcome::Done { covered: hit, mean_width } => {
                    successes += 1;
                    covered += usize::from(*hit);
                    width_sum += mean_width;
                }
                ReplicationOutcome::Failed(e) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| e.clone());
                }
            }
        }
        let total = outcomes.len();
        if failures as f64 > MAX_FAILURE_SHARE * total as f64 {
            return Err(SimulationError::Aborted {
                component: plan.component,
                failures,
                replications: total,
                first_error: first_error.unwrap_or_default(),
            });
        }
        let (coverage, mean_width) = if successes > 0 {
            (covered as f64 / successes as f64, width_sum / successes as f64)
        } else {
            (0.0, 0.0)
        };
        records.push(ComponentRecord {
            component: plan.component,
            df_own: plan.df_own,
            df_other: plan.df_other,
            coverage,
            covered,
            successes,
            failures,
            mean_width,
            first_error,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, va) = moments(a);
        let (mb, vb) = moments(b);
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
        cov / (va * vb).sqrt()
    }

    fn col(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
        x.column(j).iter().copied().collect()
    }

    #[test]
    fn component_functions() {
        assert_abs_diff_eq!(true_f(2, 0.0), -25.0 / 12.0, epsilon = 1e-15);
        assert_eq!(true_f(5, 1.7), 0.0);
        assert_abs_diff_eq!(true_f(4, 0.0), -1.4200817924159153, epsilon = 1e-12);
        assert_abs_diff_eq!(true_f(1, 0.5), -(1.0f64).sin(), epsilon = 1e-15);
        assert_eq!(true_f(3, -1.25), -1.25);
    }

    #[test]
    fn noise_scale_constants() {
        assert_abs_diff_eq!(default_sigma_bar(), 0.42320736951515897, epsilon = 1e-15);
        assert_abs_diff_eq!(3.5 * default_sigma_bar(), 1.4812257933030564, epsilon = 1e-12);
    }

    #[test]
    fn design_has_uniform_marginals_and_copula_correlation() {
        let cfg = DgpConfig {
            n: 1000,
            p: 6,
            ..DgpConfig::default()
        };
        let x = gen_design(&cfg, &mut stream(5, 0)).unwrap();
        assert!(x.iter().all(|v| (SUPPORT_LO..=SUPPORT_HI).contains(v)));
        for j in 0..6 {
            let (m, v) = moments(&col(&x, j));
            assert!(m.abs() < 0.15, "mean {m}");
            assert!((v / (25.0 / 12.0) - 1.0).abs() < 0.15, "var {v}");
        }
        let target = 0.4825837395309974;
        for j in 0..5 {
            let r = corr(&col(&x, j), &col(&x, j + 1));
            assert!((r - target).abs() < 0.05, "corr {r}");
        }
    }

    #[test]
    fn copula_correlation_converges_at_large_n() {
        let cfg = DgpConfig {
            n: 200_000,
            p: 4,
            ..DgpConfig::default()
        };
        let x = gen_design(&cfg, &mut stream(8, 0)).unwrap();
        for j in 0..3 {
            let r = corr(&col(&x, j), &col(&x, j + 1));
            assert!((r - 0.4825837395309974).abs() < 0.01, "corr {r}");
        }
        let r13 = corr(&col(&x, 0), &col(&x, 2));
        assert!((r13 - 6.0 / std::f64::consts::PI * (0.125f64).asin()).abs() < 0.01, "corr {r13}");
    }

    #[test]
    fn independent_design_when_base_is_zero() {
        let cfg = DgpConfig {
            n: 1000,
            p: 4,
            corr_base: 0.0,
            ..DgpConfig::default()
        };
        let x = gen_design(&cfg, &mut stream(6, 0)).unwrap();
        for j in 0..3 {
            assert!(corr(&col(&x, j), &col(&x, j + 1)).abs() < 0.1);
        }
    }

    #[test]
    fn noiseless_response_is_signal_sum() {
        let cfg = DgpConfig {
            n: 50,
            p: 5,
            sigma_bar: 0.0,
            ..DgpConfig::default()
        };
        let x = gen_design(&cfg, &mut stream(1, 0)).unwrap();
        let y = gen_response(&x, &cfg, 1, &mut stream(1, 1)).unwrap();
        for i in 0..50 {
            let s: f64 = (1..=5).map(|j| true_f(j, x[(i, j - 1)])).sum();
            assert_eq!(y[i], s);
        }
    }

    #[test]
    fn noise_scale_follows_driver() {
        // Constant design rows isolate the noise term.
        let cfg = DgpConfig {
            n: 20_000,
            p: 4,
            active: vec![],
            ..DgpConfig::default()
        };
        for (x0, expected) in [(0.0, default_sigma_bar()), (2.5, 3.5 * default_sigma_bar())] {
            let x = DMatrix::from_element(cfg.n, 4, x0);
            let y = gen_response(&x, &cfg, 2, &mut stream(2, 1)).unwrap();
            let sd = moments(y.as_slice()).1.sqrt();
            assert!((sd / expected - 1.0).abs() < 0.03, "{sd} vs {expected}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let small = DgpConfig { p: 3, ..DgpConfig::default() };
        assert!(small.validate().is_err());
        let corr = DgpConfig { corr_base: 1.0, ..DgpConfig::default() };
        assert!(corr.validate().is_err());
        let driver = DgpConfig {
            noise_driver: NoiseDriver::Fixed(51),
            ..DgpConfig::default()
        };
        assert!(driver.validate().is_err());
        let mut study = StudyConfig::new(DgpConfig::default(), 1);
        study.band.interval_hi = 2.5;
        assert!(study.validate().is_err());
    }

    #[test]
    fn tabulated_df_lookup() {
        assert_eq!(tabulated_df(100, 50).unwrap()[3], (5, 4));
        assert_eq!(tabulated_df(1000, 150).unwrap()[4], (4, 4));
        assert!(tabulated_df(200, 50).is_none());
        let plans = ComponentPlan::defaults(300, 10, 2, (6, 4));
        assert_eq!(plans[1], ComponentPlan { component: 2, df_own: 6, df_other: 4 });
    }

    #[test]
    fn huge_critical_value_covers_everything() {
        let mut study = StudyConfig::new(DgpConfig { n: 100, p: 8, seed: 4, ..DgpConfig::default() }, 1);
        study.band.critical_value_override = Some(1e6);
        let report = run_monte_carlo(&study).unwrap();
        assert_eq!(report.components.len(), 5);
        for rec in &report.components {
            assert_eq!(rec.coverage, 1.0);
            assert_eq!(rec.failures, 0);
        }
    }

    #[test]
    fn report_does_not_depend_on_execution_order() {
        let mut study = StudyConfig::new(DgpConfig { n: 100, p: 6, seed: 9, ..DgpConfig::default() }, 4);
        study.band.bootstrap_draws = 200;
        let forward: Vec<_> = (1..=4).map(|r| run_replication(&study, r)).collect();
        let mut backward: Vec<_> = (1..=4).rev().map(|r| (r, run_replication(&study, r))).collect();
        backward.sort_by_key(|(r, _)| *r);
        let backward: Vec<_> = backward.into_iter().map(|(_, o)| o).collect();
        assert_eq!(aggregate(&study, &forward).unwrap(), aggregate(&study, &backward).unwrap());
        let report = run_monte_carlo(&study).unwrap();
        assert_eq!(report.components, aggregate(&study, &forward).unwrap());
    }

    #[test]
    fn too_many_failures_abort() {
        let study = StudyConfig::new(DgpConfig::default(), 5);
        let fail = ReplicationOutcome::Failed("boom".into());
        let ok = ReplicationOutcome::Done { covered: true, mean_width: 1.0 };
        let mut outcomes = vec![vec![ok.clone(); 5]; 5];
        outcomes[0][2] = fail.clone();
        let recs = aggregate(&study, &outcomes).unwrap();
        assert_eq!(recs[2].failures, 1);
        assert_eq!(recs[2].successes, 4);
        assert_eq!(recs[2].first_error.as_deref(), Some("boom"));
        outcomes[1][2] = fail;
        assert!(matches!(aggregate(&study, &outcomes), Err(SimulationError::Aborted { component: 3, .. })));
    }
}
