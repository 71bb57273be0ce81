//! Simultaneous confidence bands for the target component via a Gaussian
//! multiplier bootstrap of the standardized score process.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::linspace;
use crate::orthogonal::{predict_f1, Covariate, OrthogonalError, OrthogonalModel};
use crate::rng::stream;

/// Pointwise scales at or below this are rejected.
pub const MIN_SCALE: f64 = 1e-12;
pub const MIN_BOOTSTRAP_DRAWS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandError {
    #[error(transparent)]
    Model(#[from] OrthogonalError),

    #[error("degenerate band scale {sigma:e} at x = {x}")]
    DegenerateScale { x: f64, sigma: f64 },

    #[error("invalid band configuration: {0}")]
    InvalidConfiguration(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("interval [{lo}, {hi}] leaves the target support [{support_lo}, {support_hi}]")]
    OutsideSupport {
        lo: f64,
        hi: f64,
        support_lo: f64,
        support_hi: f64,
    },
}

/// Standardized score process on a grid.
#[derive(Debug, Clone)]
pub struct ScoreProjection {
    /// Entry `(i, k)` is the standardized score of observation `i` at grid point `k`.
    pub values: DMatrix<f64>,
    pub grid: Vec<f64>,
    /// `(g̃(x)ᵀ Σ̂ g̃(x))^{1/2}` per grid point.
    pub sigma_x: Vec<f64>,
}

impl ScoreProjection {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn grid_size(&self) -> usize {
        self.values.ncols()
    }
}

pub fn project_scores(model: &OrthogonalModel, grid: &[f64]) -> Result<ScoreProjection, BandError> {
    let g = model
        .design
        .g
        .transform_points(grid)
        .map_err(|source| OrthogonalError::Spline {
            covariate: Covariate::Target,
            source,
        })?;
    // ψ_il / Ĵ_l, so that column k of `scaled * g̃(x_k)` is the linearized process.
    let mut scaled = model.score_residuals.clone();
    for (l, mut col) in scaled.column_iter_mut().enumerate() {
        col /= model.j_hat[l];
    }
    let mut sigma_x = Vec::with_capacity(grid.len());
    for (k, &x) in grid.iter().enumerate() {
        let gk = g.row(k).transpose();
        let var = (gk.transpose() * &model.sigma_n * &gk)[(0, 0)];
        let s = var.max(0.0).sqrt();
        if !(s > MIN_SCALE) {
            return Err(BandError::DegenerateScale { x, sigma: s });
        }
        sigma_x.push(s);
    }
    let mut values = &scaled * g.transpose();
    for (k, mut col) in values.column_iter_mut().enumerate() {
        col /= sigma_x[k];
    }
    Ok(ScoreProjection {
        values,
        grid: grid.to_vec(),
        sigma_x,
    })
}

/// Sup statistic of one multiplier draw.
fn sup_draw(values: &DMatrix<f64>, seed: u64, draw: u64) -> f64 {
    let n = values.nrows();
    let mut rng = stream(seed, draw);
    let xi = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let sums = values.tr_mul(&xi);
    sums.amax() / (n as f64).sqrt()
}

/// Empirical `(1 - alpha)` quantile of the bootstrap sup statistic.
///
/// Draw `b` (1-based) uses stream `b` of `seed`; the quantile is the order
/// statistic at `ceil((1 - alpha) B)`.
pub fn bootstrap_critical_value(
    projection: &ScoreProjection,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<f64, BandError> {
    let mut sups = bootstrap_sups(projection, draws, seed)?;
    check_alpha(alpha)?;
    sups.sort_by(f64::total_cmp);
    Ok(sups[quantile_index(alpha, draws)])
}

/// All `B` bootstrap sup statistics in draw order.
pub fn bootstrap_sups(projection: &ScoreProjection, draws: usize, seed: u64) -> Result<Vec<f64>, BandError> {
    if draws < MIN_BOOTSTRAP_DRAWS {
        return Err(BandError::InvalidConfiguration(format!(
            "need at least {MIN_BOOTSTRAP_DRAWS} bootstrap draws, got {draws}"
        )));
    }
    if projection.n() == 0 || projection.grid_size() == 0 {
        return Err(BandError::InvalidConfiguration("empty score projection".into()));
    }
    Ok((1..=draws as u64)
        .into_par_iter()
        .map(|b| sup_draw(&projection.values, seed, b))
        .collect())
}

fn check_alpha(alpha: f64) -> Result<(), BandError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(BandError::InvalidConfiguration(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// 0-based index of the order statistic `ceil((1 - alpha) B)`.
fn quantile_index(alpha: f64, draws: usize) -> usize {
    // The small slack keeps e.g. 0.95 * 100 from rounding up to 96.
    let rank = ((1.0 - alpha) * draws as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, draws) - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub grid_size: usize,
    pub alpha: f64,
    pub bootstrap_draws: usize,
    pub seed: u64,
    /// Skip the bootstrap and use this critical value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_value_override: Option<f64>,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            interval_lo: -2.0,
            interval_hi: 2.0,
            grid_size: 101,
            alpha: 0.05,
            bootstrap_draws: 1000,
            seed: 0,
            critical_value_override: None,
        }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<(), BandError> {
        check_alpha(self.alpha)?;
        if self.grid_size == 0 {
            return Err(BandError::InvalidConfiguration("grid size must be positive".into()));
        }
        if !(self.interval_lo.is_finite() && self.interval_hi.is_finite())
            || self.interval_lo > self.interval_hi
        {
            return Err(BandError::InvalidConfiguration(format!(
                "bad interval [{}, {}]",
                self.interval_lo, self.interval_hi
            )));
        }
        if self.critical_value_override.is_none() && self.bootstrap_draws < MIN_BOOTSTRAP_DRAWS {
            return Err(BandError::InvalidConfiguration(format!(
                "need at least {MIN_BOOTSTRAP_DRAWS} bootstrap draws, got {}",
                self.bootstrap_draws
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(self.interval_lo, self.interval_hi, self.grid_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub f1_hat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub c_alpha: f64,
    pub alpha: f64,
    pub bootstrap_draws: usize,
    pub seed: u64,
}

impl BandResult {
    /// Average of `upper - lower` over the grid.
    pub fn mean_width(&self) -> f64 {
        let m = self.grid.len();
        if m == 0 {
            return 0.0;
        }
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).sum::<f64>() / m as f64
    }
}

pub fn build_bands(model: &OrthogonalModel, config: &BandConfig) -> Result<BandResult, BandError> {
    config.validate()?;
    let grid = config.grid();
    let (lo, hi) = model.design.target_spec.support();
    if config.interval_lo < lo || config.interval_hi > hi {
        return Err(BandError::OutsideSupport {
            lo: config.interval_lo,
            hi: config.interval_hi,
            support_lo: lo,
            support_hi: hi,
        });
    }
    let f1_hat = predict_f1(model, &grid)?;
    let projection = project_scores(model, &grid)?;
    let c_alpha = match config.critical_value_override {
        Some(c) => c,
        None => bootstrap_critical_value(&projection, config.alpha, config.bootstrap_draws, config.seed)?,
    };
    let root_n = (model.n() as f64).sqrt();
    let half: Vec<f64> = projection.sigma_x.iter().map(|s| s * c_alpha / root_n).collect();
    let lower = f1_hat.iter().zip(&half).map(|(f, h)| f - h).collect();
    let upper = f1_hat.iter().zip(&half).map(|(f, h)| f + h).collect();
    Ok(BandResult {
        grid,
        f1_hat: f1_hat.iter().copied().collect(),
        lower,
        upper,
        sigma_x: projection.sigma_x,
        c_alpha,
        alpha: config.alpha,
        bootstrap_draws: config.bootstrap_draws,
        seed: config.seed,
    })
}

/// Whether `truth` lies inside the closed band at every grid point.
pub fn covers(band: &BandResult, truth: &[f64]) -> Result<bool, BandError> {
    if truth.len() != band.grid.len() {
        return Err(BandError::LengthMismatch {
            expected: band.grid.len(),
            found: truth.len(),
        });
    }
    Ok(truth
        .iter()
        .zip(band.lower.iter().zip(&band.upper))
        .all(|(t, (l, u))| l <= t && t <= u))
}
