//! Self-tuned weighted lasso with data-driven penalty loadings and an OLS
//! refit on the selected support.
//!
//! The lasso minimises `½ E_n[(y − Xβ)²] + (λ/n) Σ_j l_j |β_j|` by cyclic
//! coordinate descent. The penalty level `λ = c_λ √n Q(1 − γ/(2pd))` comes
//! from a union bound over `p` coordinates and `d` simultaneous regressions;
//! the loadings `l_j` start at the sup-norm of the design and are refreshed
//! from the score `(y − Xβ̂) x_j` after each solve. Columns are used as given,
//! never standardised.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{min_norm_lstsq, normal_upper_quantile};

/// Coefficient change below which a sweep counts as converged.
pub const COORDINATE_TOLERANCE: f64 = 1e-7;
pub const MAX_SWEEPS: usize = 10_000;
/// Largest KKT violation accepted for a returned solution.
pub const KKT_TOLERANCE: f64 = 1e-6;
/// Lower bound applied to refreshed loadings.
pub const LOADING_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LassoError {
    #[error("invalid penalty configuration: {0}")]
    InvalidConfiguration(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("coordinate descent did not converge after {sweeps} sweeps (KKT gap {kkt_gap:e})")]
    NoConvergence { sweeps: usize, kkt_gap: f64 },
}

/// Loadings used for the first solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingStart {
    /// Every loading equals `max |X_ij|`.
    #[default]
    SupNorm,
    /// `l_j = E_n[(x_j (y − ȳ))²]^{1/2}`.
    Marginal,
}

/// Which coefficients produce the residuals for a loading refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshResidual {
    #[default]
    Lasso,
    PostLasso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Multiplier on the penalty level; must exceed 1.
    pub c_lambda: f64,
    /// Union-bound probability. `None` means `0.1 / ln n`. Either way the
    /// value is clamped to `[1/n, 1/ln n]`.
    pub gamma: Option<f64>,
    /// Number of loading refreshes after the initial solve.
    pub loading_refreshes: usize,
    /// Number of regressions sharing the union bound.
    pub simultaneous_count: usize,
    /// Replaces the theory-driven penalty level when set (0 disables the penalty).
    pub lambda_override: Option<f64>,
    #[serde(default)]
    pub loading_start: LoadingStart,
    #[serde(default)]
    pub refresh_residual: RefreshResidual,
    /// Stop refreshing early once the loadings move less than this in
    /// Euclidean norm.
    #[serde(default)]
    pub loading_tolerance: Option<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            c_lambda: 1.1,
            gamma: None,
            loading_refreshes: 2,
            simultaneous_count: 1,
            lambda_override: None,
            loading_start: LoadingStart::SupNorm,
            refresh_residual: RefreshResidual::Lasso,
            loading_tolerance: None,
        }
    }
}

impl PenaltyConfig {
    /// A configuration that turns every fit into plain least squares.
    pub fn unpenalized() -> Self {
        Self {
            lambda_override: Some(0.0),
            loading_refreshes: 0,
            ..Self::default()
        }
    }

    pub fn with_simultaneous_count(mut self, d: usize) -> Self {
        self.simultaneous_count = d;
        self
    }

    pub fn effective_gamma(&self, n: usize) -> f64 {
        let ln_n = (n as f64).ln();
        let raw = self.gamma.unwrap_or(0.1 / ln_n);
        raw.clamp(1.0 / n as f64, 1.0 / ln_n)
    }

    pub fn validate(&self) -> Result<(), LassoError> {
        if !(self.c_lambda > 1.0) {
            return Err(LassoError::InvalidConfiguration(format!(
                "c_lambda must exceed 1, got {}",
                self.c_lambda
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(LassoError::InvalidConfiguration(format!(
                    "gamma must lie in (0, 1), got {g}"
                )));
            }
        }
        if self.simultaneous_count == 0 {
            return Err(LassoError::InvalidConfiguration(
                "simultaneous_count must be positive".into(),
            ));
        }
        if let Some(t) = self.loading_tolerance {
            if !(t >= 0.0) {
                return Err(LassoError::InvalidConfiguration(format!(
                    "loading tolerance must be non-negative, got {t}"
                )));
            }
        }
        if let Some(l) = self.lambda_override {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(LassoError::InvalidConfiguration(format!(
                    "lambda override must be finite and non-negative, got {l}"
                )));
            }
        }
        Ok(())
    }
}

fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

/// Output of [`weighted_lasso`].
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub lambda: f64,
    pub loadings: DVector<f64>,
    pub coefficients: DVector<f64>,
    pub support: Vec<usize>,
    pub post_coefficients: DVector<f64>,
    pub kkt_gap: f64,
}

/// `λ = c_λ √n Q(1 − γ/(2pd))`.
///
/// Only `c_lambda > 0` is required here so that the bare formula can be
/// evaluated; [`PenaltyConfig::validate`] enforces `c_lambda > 1` for fits.
pub fn penalty_level(n: usize, p: usize, config: &PenaltyConfig) -> Result<f64, LassoError> {
    if n == 0 || p == 0 {
        return Err(LassoError::InvalidConfiguration(format!(
            "n and p must be positive (n = {n}, p = {p})"
        )));
    }
    if !(config.c_lambda > 0.0) || config.simultaneous_count == 0 {
        return Err(LassoError::InvalidConfiguration(
            "c_lambda and simultaneous_count must be positive".into(),
        ));
    }
    let gamma = config.effective_gamma(n);
    let tail = gamma / (2.0 * p as f64 * config.simultaneous_count as f64);
    if !(tail < 0.5) {
        return Err(LassoError::InvalidConfiguration(format!(
            "gamma/(2pd) = {tail} must be below 1/2"
        )));
    }
    Ok(config.c_lambda * (n as f64).sqrt() * normal_upper_quantile(tail))
}

/// Initial loadings: every entry equals `max_ij |X_ij|`.
pub fn initial_loadings(x: &DMatrix<f64>) -> Result<DVector<f64>, LassoError> {
    let max_abs = x.amax();
    if !(max_abs > 0.0) {
        return Err(LassoError::DegenerateDesign(
            "design matrix is identically zero".into(),
        ));
    }
    Ok(DVector::from_element(x.ncols(), max_abs))
}

/// Refreshed loadings `l_j = E_n[((y − Xβ) x_j)²]^{1/2}`, floored at
/// [`LOADING_FLOOR`].
pub fn refresh_loadings(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<DVector<f64>, LassoError> {
    check_dims(x, y)?;
    if beta.len() != x.ncols() {
        return Err(LassoError::DimensionMismatch(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    let n = x.nrows() as f64;
    let resid = y - x * beta;
    let loadings = x.column_iter().map(|col| {
        let ms = col
            .iter()
            .zip(resid.iter())
            .map(|(xi, ri)| (xi * ri) * (xi * ri))
            .sum::<f64>()
            / n;
        ms.sqrt().max(LOADING_FLOOR)
    });
    Ok(DVector::from_iterator(x.ncols(), loadings))
}

fn check_dims(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(), LassoError> {
    if x.nrows() != y.len() {
        return Err(LassoError::DimensionMismatch(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent state for one weighted lasso problem.
///
/// Exposed so callers can step sweep by sweep; [`lasso_solve`] drives it to
/// convergence.
pub struct CoordinateDescent<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    /// Per-coordinate penalty `(λ/n) l_j`.
    thresholds: Vec<f64>,
    col_sq: Vec<f64>,
    frozen: Vec<bool>,
    beta: DVector<f64>,
    resid: DVector<f64>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        y: &'a DVector<f64>,
        lambda: f64,
        loadings: &DVector<f64>,
    ) -> Result<Self, LassoError> {
        check_dims(x, y)?;
        if loadings.len() != x.ncols() {
            return Err(LassoError::DimensionMismatch(format!(
                "{} loadings for {} columns",
                loadings.len(),
                x.ncols()
            )));
        }
        if let Some(l) = loadings.iter().find(|l| !(**l > 0.0)) {
            return Err(LassoError::InvalidConfiguration(format!(
                "loadings must be positive, found {l}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LassoError::InvalidConfiguration(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(LassoError::DegenerateDesign("non-finite entries".into()));
        }
        let n = x.nrows().max(1) as f64;
        let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / n).collect();
        let max_sq = col_sq.iter().cloned().fold(0.0, f64::max);
        let frozen = col_sq
            .iter()
            .map(|&s| s <= 1e-14 * max_sq || s < 1e-300)
            .collect();
        Ok(Self {
            x,
            y,
            thresholds: loadings.iter().map(|l| lambda / n * l).collect(),
            col_sq,
            frozen,
            beta: DVector::zeros(x.ncols()),
            resid: y.clone(),
        })
    }

    fn column(&self, j: usize) -> &[f64] {
        let n = self.x.nrows();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// One pass over all coordinates in index order; returns the largest
    /// absolute coefficient change.
    pub fn sweep(&mut self) -> f64 {
        let n = self.x.nrows() as f64;
        let mut max_change: f64 = 0.0;
        for j in 0..self.beta.len() {
            if self.frozen[j] {
                continue;
            }
            let old = self.beta[j];
            let col = self.column(j);
            let dot: f64 = col.iter().zip(self.resid.iter()).map(|(a, b)| a * b).sum();
            let rho = dot / n + self.col_sq[j] * old;
            let new = soft_threshold(rho, self.thresholds[j]) / self.col_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                let n_rows = self.x.nrows();
                let data = &self.x.as_slice()[j * n_rows..(j + 1) * n_rows];
                for (r, xi) in self.resid.iter_mut().zip(data) {
                    *r -= xi * delta;
                }
                self.beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    fn refresh_residual(&mut self) {
        self.resid = self.y - self.x * &self.beta;
    }

    /// Penalised objective at the current iterate.
    pub fn objective(&self) -> f64 {
        let n = self.x.nrows() as f64;
        let fit = 0.5 * self.resid.norm_squared() / n;
        let pen: f64 = self
            .beta
            .iter()
            .zip(&self.thresholds)
            .map(|(b, t)| t * b.abs())
            .sum();
        fit + pen
    }

    /// Largest violation of the lasso optimality conditions.
    pub fn kkt_gap(&self) -> f64 {
        kkt_gap_of(self.x, &self.resid, &self.beta, &self.thresholds, &self.frozen)
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.beta
    }
}

fn kkt_gap_of(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    beta: &DVector<f64>,
    thresholds: &[f64],
    frozen: &[bool],
) -> f64 {
    let n = x.nrows() as f64;
    let mut gap: f64 = 0.0;
    for (j, col) in x.column_iter().enumerate() {
        if frozen[j] {
            continue;
        }
        let grad = col.dot(resid) / n;
        let b = beta[j];
        let v = if b == 0.0 {
            (grad.abs() - thresholds[j]).max(0.0)
        } else {
            (grad - b.signum() * thresholds[j]).abs()
        };
        gap = gap.max(v);
    }
    gap
}

/// Converged lasso solution with its optimality certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coefficients: DVector<f64>,
    pub kkt_gap: f64,
    pub sweeps: usize,
}

/// Weighted lasso by cyclic coordinate descent.
///
/// Sweeps until the largest coefficient change drops below
/// [`COORDINATE_TOLERANCE`] and the KKT gap is below that same tolerance, or
/// [`MAX_SWEEPS`] is reached. Columns with (numerically) zero second moment
/// stay at zero.
pub fn lasso_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    loadings: &DVector<f64>,
) -> Result<LassoSolution, LassoError> {
    let mut cd = CoordinateDescent::new(x, y, lambda, loadings)?;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let change = cd.sweep();
        sweeps += 1;
        if change < COORDINATE_TOLERANCE {
            cd.refresh_residual();
            if cd.kkt_gap() <= COORDINATE_TOLERANCE {
                break;
            }
        }
    }
    cd.refresh_residual();
    let kkt_gap = cd.kkt_gap();
    if kkt_gap > KKT_TOLERANCE {
        return Err(LassoError::NoConvergence { sweeps, kkt_gap });
    }
    Ok(LassoSolution {
        coefficients: cd.beta,
        kkt_gap,
        sweeps,
    })
}

/// Least squares restricted to `support` (minimum-norm when the restricted
/// system is rank deficient), zero elsewhere.
pub fn post_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    support: &[usize],
) -> Result<DVector<f64>, LassoError> {
    check_dims(x, y)?;
    let mut out = DVector::zeros(x.ncols());
    if support.is_empty() {
        return Ok(out);
    }
    if let Some(&bad) = support.iter().find(|&&j| j >= x.ncols()) {
        return Err(LassoError::DimensionMismatch(format!(
            "support index {bad} out of range for {} columns",
            x.ncols()
        )));
    }
    let sub = x.select_columns(support);
    let coef = min_norm_lstsq(&sub, y);
    for (k, &j) in support.iter().enumerate() {
        out[j] = coef[k];
    }
    Ok(out)
}

/// Full penalty-loading iteration: initial loadings, solve, then
/// `loading_refreshes` rounds of refresh + re-solve, then post-lasso on the
/// final support.
pub fn weighted_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &PenaltyConfig,
) -> Result<PenalizedFit, LassoError> {
    check_dims(x, y)?;
    config.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(LassoError::InvalidConfiguration(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    let lambda = match config.lambda_override {
        Some(l) => l,
        None => penalty_level(n, x.ncols().max(1), config)?,
    };
    let mut loadings = match config.loading_start {
        LoadingStart::SupNorm => initial_loadings(x)?,
        LoadingStart::Marginal => {
            let centered = y.add_scalar(-y.mean());
            refresh_loadings(x, &centered, &DVector::zeros(x.ncols()))?
        }
    };
    let mut sol = lasso_solve(x, y, lambda, &loadings)?;
    let mut support = support_of(&sol.coefficients);
    let mut post_coefficients = post_lasso(x, y, &support)?;
    for _ in 0..config.loading_refreshes {
        let beta = match config.refresh_residual {
            RefreshResidual::Lasso => &sol.coefficients,
            RefreshResidual::PostLasso => &post_coefficients,
        };
        let refreshed = refresh_loadings(x, y, beta)?;
        let moved = (&refreshed - &loadings).norm();
        loadings = refreshed;
        sol = lasso_solve(x, y, lambda, &loadings)?;
        support = support_of(&sol.coefficients);
        post_coefficients = post_lasso(x, y, &support)?;
        if config.loading_tolerance.is_some_and(|t| moved < t) {
            break;
        }
    }
    Ok(PenalizedFit {
        lambda,
        loadings,
        coefficients: sol.coefficients,
        support,
        post_coefficients,
        kkt_gap: sol.kkt_gap,
    })
}
