//! Orthogonal-score estimation of the target component's spline coefficients.
//!
//! The target covariate is expanded in a centered B-spline basis `g̃`, every
//! other covariate in its own basis `h̃`, and `Z = [g̃ | h̃]`. One lasso of `y`
//! on `Z` gives `β̂`; for each target basis function `l` a lasso of `g̃_l` on
//! `Z₋l` gives the instrument residual `ν̂^(l)`. The score
//!
//! ```text
//! ψ_l = (y − θ_l g̃_l − β̂^(l)ᵀ Z₋l) · ν̂^(l)
//! ```
//!
//! is linear in `θ_l`, so each `θ̂_l` is available in closed form. The
//! Jacobian is diagonal and the plug-in covariance is
//! `Σ̂_n = Ĵ⁻¹ E_n[ψψᵀ] Ĵ⁻¹`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::lasso::{weighted_lasso, LassoError, PenaltyConfig, PenalizedFit};
use crate::splines::{build_matrix, knots_from_data, BasisMatrix, SplineError, SplineSpec};

/// Smallest |E_n[g_l ν̂_l]| accepted when solving the score.
pub const MIN_IDENTIFYING_MOMENT: f64 = 1e-8;
/// Jacobian entries at or above `-MIN_JACOBIAN` are treated as degenerate.
pub const MIN_JACOBIAN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariate {
    Target,
    Other(usize),
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Covariate::Target => write!(f, "target covariate"),
            Covariate::Other(j) => write!(f, "covariate {j}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regression {
    Outcome,
    Auxiliary(usize),
}

impl fmt::Display for Regression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regression::Outcome => write!(f, "outcome regression"),
            Regression::Auxiliary(l) => write!(f, "auxiliary regression {l}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrthogonalError {
    #[error("{covariate}: {source}")]
    Spline {
        covariate: Covariate,
        #[source]
        source: SplineError,
    },

    #[error("{regression}: {source}")]
    Lasso {
        regression: Regression,
        #[source]
        source: LassoError,
    },

    #[error("degenerate residual for component {component}: {detail}")]
    DegenerateResidual { component: usize, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl OrthogonalError {
    fn spline(covariate: Covariate) -> impl FnOnce(SplineError) -> Self {
        move |source| OrthogonalError::Spline { covariate, source }
    }

    fn lasso(regression: Regression) -> impl FnOnce(LassoError) -> Self {
        move |source| OrthogonalError::Lasso { regression, source }
    }
}

/// How a non-target covariate enters the nuisance design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermSpec {
    Spline(SplineSpec),
    /// The raw (centered) covariate, e.g. for a binary indicator.
    Linear,
}

/// Knot layout for every covariate, fixed before any centering so that
/// training subsets and new points share the same basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub target: SplineSpec,
    pub others: Vec<TermSpec>,
}

/// Knots for an intercept-free basis with `df` columns: the full clamped
/// basis has `df + 1` functions and the first one is dropped after evaluation.
pub fn spline_spec_for_df(x: &[f64], df: usize, degree: usize) -> Result<SplineSpec, SplineError> {
    if df < degree.max(1) {
        return Err(SplineError::InvalidConfiguration(format!(
            "df = {df} is below the minimum {} for degree {degree}",
            degree.max(1)
        )));
    }
    knots_from_data(x, df + 1, degree)
}

impl DesignSpec {
    /// Spline terms for every covariate with quantile knots from the data.
    pub fn from_data(
        x_target: &[f64],
        x_others: &DMatrix<f64>,
        df_own: usize,
        df_other: usize,
        degree: usize,
    ) -> Result<Self, OrthogonalError> {
        let target = spline_spec_for_df(x_target, df_own, degree)
            .map_err(OrthogonalError::spline(Covariate::Target))?;
        let others = (0..x_others.ncols())
            .map(|j| {
                let col: Vec<f64> = x_others.column(j).iter().copied().collect();
                spline_spec_for_df(&col, df_other, degree)
                    .map(TermSpec::Spline)
                    .map_err(OrthogonalError::spline(Covariate::Other(j)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { target, others })
    }
}

#[derive(Debug, Clone)]
pub enum OtherBlock {
    Spline(BasisMatrix),
    Linear { mean: f64 },
}

impl OtherBlock {
    pub fn dimension(&self) -> usize {
        match self {
            OtherBlock::Spline(b) => b.dimension(),
            OtherBlock::Linear { .. } => 1,
        }
    }
}

/// The centered additive design `Z = [G | H]` and centered response.
#[derive(Debug, Clone)]
pub struct AdditiveDesign {
    pub g: BasisMatrix,
    pub h_blocks: Vec<OtherBlock>,
    pub z: DMatrix<f64>,
    pub y_centered: DVector<f64>,
    pub y_mean: f64,
    pub target_spec: SplineSpec,
}

impl AdditiveDesign {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Number of target basis functions.
    pub fn d1(&self) -> usize {
        self.g.dimension()
    }

    /// Number of nuisance basis columns.
    pub fn d2(&self) -> usize {
        self.z.ncols() - self.d1()
    }

    /// Column `l` of the target block.
    pub fn g_column(&self, l: usize) -> DVector<f64> {
        self.z.column(l).into_owned()
    }

    /// `Z` with column `l` removed.
    pub fn z_without(&self, l: usize) -> DMatrix<f64> {
        self.z.clone().remove_column(l)
    }

    /// Centered nuisance-block row for one new observation of the other covariates.
    pub fn transform_others(&self, x_others: &[f64]) -> Result<DVector<f64>, OrthogonalError> {
        if x_others.len() != self.h_blocks.len() {
            return Err(OrthogonalError::DimensionMismatch(format!(
                "expected {} other covariates, got {}",
                self.h_blocks.len(),
                x_others.len()
            )));
        }
        let mut out = Vec::with_capacity(self.d2());
        for (j, (block, &x)) in self.h_blocks.iter().zip(x_others).enumerate() {
            match block {
                OtherBlock::Spline(b) => {
                    let row = b
                        .transform_point(x)
                        .map_err(OrthogonalError::spline(Covariate::Other(j)))?;
                    out.extend(row.iter());
                }
                OtherBlock::Linear { mean } => out.push(x - mean),
            }
        }
        Ok(DVector::from_vec(out))
    }
}

fn check_rows(x_target: &[f64], x_others: &DMatrix<f64>, y: &[f64]) -> Result<(), OrthogonalError> {
    if x_target.len() != y.len() || x_others.nrows() != y.len() {
        return Err(OrthogonalError::DimensionMismatch(format!(
            "row counts differ: target {}, others {}, response {}",
            x_target.len(),
            x_others.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Evaluates every term of `spec` on the sample, centers all columns and `y`.
pub fn assemble_design(
    spec: &DesignSpec,
    x_target: &[f64],
    x_others: &DMatrix<f64>,
    y: &[f64],
) -> Result<AdditiveDesign, OrthogonalError> {
    check_rows(x_target, x_others, y)?;
    if spec.others.len() != x_others.ncols() {
        return Err(OrthogonalError::DimensionMismatch(format!(
            "{} term specs for {} other covariates",
            spec.others.len(),
            x_others.ncols()
        )));
    }
    let n = y.len();
    let g = build_matrix(&spec.target, x_target, true)
        .map_err(OrthogonalError::spline(Covariate::Target))?
        .drop_first_column();

    let mut h_blocks = Vec::with_capacity(spec.others.len());
    for (j, term) in spec.others.iter().enumerate() {
        let col: Vec<f64> = x_others.column(j).iter().copied().collect();
        let block = match term {
            TermSpec::Spline(s) => OtherBlock::Spline(
                build_matrix(s, &col, true)
                    .map_err(OrthogonalError::spline(Covariate::Other(j)))?
                    .drop_first_column(),
            ),
            TermSpec::Linear => OtherBlock::Linear {
                mean: col.iter().sum::<f64>() / n as f64,
            },
        };
        h_blocks.push(block);
    }

    let d1 = g.dimension();
    let d2: usize = h_blocks.iter().map(OtherBlock::dimension).sum();
    let mut z = DMatrix::zeros(n, d1 + d2);
    z.columns_mut(0, d1).copy_from(&g.values);
    let mut offset = d1;
    for (j, block) in h_blocks.iter().enumerate() {
        match block {
            OtherBlock::Spline(b) => {
                z.columns_mut(offset, b.dimension()).copy_from(&b.values);
            }
            OtherBlock::Linear { mean } => {
                for i in 0..n {
                    z[(i, offset)] = x_others[(i, j)] - mean;
                }
            }
        }
        offset += block.dimension();
    }

    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_centered = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    Ok(AdditiveDesign {
        target_spec: spec.target.clone(),
        g,
        h_blocks,
        z,
        y_centered,
        y_mean,
    })
}

/// Quantile-knot spline bases for the target (`df_own` columns) and every
/// other covariate (`df_other` columns each), all centered.
pub fn build_design(
    x_target: &[f64],
    x_others: &DMatrix<f64>,
    y: &[f64],
    df_own: usize,
    df_other: usize,
    degree: usize,
) -> Result<AdditiveDesign, OrthogonalError> {
    check_rows(x_target, x_others, y)?;
    let spec = DesignSpec::from_data(x_target, x_others, df_own, df_other, degree)?;
    assemble_design(&spec, x_target, x_others, y)
}

/// Post-lasso nuisance estimates.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    /// Post-lasso coefficients of `y` on `Z` (length d1 + d2).
    pub beta_hat: DVector<f64>,
    /// Post-lasso coefficients of `g_l` on `Z₋l`, one per target basis function.
    pub gamma_hat: Vec<DVector<f64>>,
    /// Instrument residuals, column `l` is `g_l − Z₋l γ̂^(l)`.
    pub nu_hat: DMatrix<f64>,
    /// `y − Z β̂`.
    pub outcome_residual: DVector<f64>,
    pub outcome_fit: PenalizedFit,
    pub auxiliary_fits: Vec<PenalizedFit>,
}

/// Lasso of target basis column `l` on the rest of `Z`, with the penalty's
/// union bound spread over all `d1` auxiliary regressions.
pub fn auxiliary_regression(
    design: &AdditiveDesign,
    l: usize,
    config: &PenaltyConfig,
) -> Result<PenalizedFit, OrthogonalError> {
    let aux_config = config.clone().with_simultaneous_count(design.d1());
    weighted_lasso(&design.z_without(l), &design.g_column(l), &aux_config)
        .map_err(OrthogonalError::lasso(Regression::Auxiliary(l)))
}

pub fn fit_nuisance(
    design: &AdditiveDesign,
    config: &PenaltyConfig,
) -> Result<NuisanceSet, OrthogonalError> {
    let outcome_fit = weighted_lasso(
        &design.z,
        &design.y_centered,
        &config.clone().with_simultaneous_count(1),
    )
    .map_err(OrthogonalError::lasso(Regression::Outcome))?;

    let auxiliary_fits = (0..design.d1())
        .into_par_iter()
        .map(|l| auxiliary_regression(design, l, config))
        .collect::<Result<Vec<_>, _>>()?;

    let n = design.n();
    let mut nu_hat = DMatrix::zeros(n, design.d1());
    for (l, fit) in auxiliary_fits.iter().enumerate() {
        let fitted = design.z_without(l) * &fit.post_coefficients;
        let nu = design.g_column(l) - fitted;
        nu_hat.set_column(l, &nu);
    }
    let beta_hat = outcome_fit.post_coefficients.clone();
    let outcome_residual = &design.y_centered - &design.z * &beta_hat;
    Ok(NuisanceSet {
        gamma_hat: auxiliary_fits
            .iter()
            .map(|f| f.post_coefficients.clone())
            .collect(),
        beta_hat,
        nu_hat,
        outcome_residual,
        outcome_fit,
        auxiliary_fits,
    })
}

fn mean_product(a: &DVector<f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// `y − β̂^(l)ᵀ Z₋l`: the response net of every fitted term except `g_l`.
fn partial_response(design: &AdditiveDesign, nuisance: &NuisanceSet, l: usize) -> DVector<f64> {
    let g_l = design.z.column(l);
    &nuisance.outcome_residual + g_l * nuisance.beta_hat[l]
}

/// Closed-form zero of each linear score:
/// `θ̂_l = E_n[(y − β̂^(l)ᵀ Z₋l) ν̂_l] / E_n[g_l ν̂_l]`.
pub fn solve_theta(
    design: &AdditiveDesign,
    nuisance: &NuisanceSet,
) -> Result<DVector<f64>, OrthogonalError> {
    let d1 = design.d1();
    if nuisance.nu_hat.ncols() != d1 || nuisance.beta_hat.len() != design.z.ncols() {
        return Err(OrthogonalError::DimensionMismatch(
            "nuisance estimates do not match the design".into(),
        ));
    }
    let mut theta = DVector::zeros(d1);
    for l in 0..d1 {
        let nu = nuisance.nu_hat.column(l).into_owned();
        let denom = mean_product(&nu, design.z.column(l).iter().copied());
        if denom.abs() < MIN_IDENTIFYING_MOMENT {
            return Err(OrthogonalError::DegenerateResidual {
                component: l,
                detail: format!("E_n[g_l ν_l] = {denom:e} has no identifying variation"),
            });
        }
        let partial = partial_response(design, nuisance, l);
        theta[l] = mean_product(&nu, partial.iter().copied()) / denom;
    }
    Ok(theta)
}

/// Which plug-in to use for the diagonal Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianForm {
    /// `Ĵ_l = −E_n[ν̂_l²]`.
    #[default]
    ResidualSquare,
    /// `Ĵ_l = −E_n[g_l ν̂_l]`.
    Instrument,
}

/// Fitted target coefficients with the score-based covariance.
#[derive(Debug, Clone)]
pub struct OrthogonalModel {
    pub theta_hat: DVector<f64>,
    /// Diagonal of the Jacobian.
    pub j_hat: DVector<f64>,
    /// Entry `(i, l)` is `ψ_l(W_i)` at the estimates.
    pub score_residuals: DMatrix<f64>,
    pub sigma_eps_nu: DMatrix<f64>,
    pub sigma_n: DMatrix<f64>,
    /// `E_n[ψ_l]` per component after solving.
    pub score_means: DVector<f64>,
    pub design: AdditiveDesign,
    pub nuisance: NuisanceSet,
}

impl OrthogonalModel {
    pub fn n(&self) -> usize {
        self.design.n()
    }

    /// Largest `|E_n[ψ_l]|`.
    pub fn max_score(&self) -> f64 {
        self.score_means.amax()
    }

    /// Fitted centered surface `θ̂ᵀ g̃(x) + β̂_Hᵀ h̃(x_others)` at new points.
    pub fn predict_surface(
        &self,
        x_target: &[f64],
        x_others: &DMatrix<f64>,
    ) -> Result<DVector<f64>, OrthogonalError> {
        if x_others.nrows() != x_target.len() {
            return Err(OrthogonalError::DimensionMismatch(format!(
                "{} target values, {} rows of other covariates",
                x_target.len(),
                x_others.nrows()
            )));
        }
        let f1 = predict_f1(self, x_target)?;
        let d1 = self.design.d1();
        let beta_h = self.nuisance.beta_hat.rows(d1, self.design.d2());
        let mut out = f1;
        for i in 0..x_target.len() {
            let row: Vec<f64> = x_others.row(i).iter().copied().collect();
            let h = self.design.transform_others(&row)?;
            out[i] += beta_h.dot(&h);
        }
        Ok(out)
    }
}

pub fn estimate_covariance(
    design: AdditiveDesign,
    nuisance: NuisanceSet,
    theta_hat: DVector<f64>,
) -> Result<OrthogonalModel, OrthogonalError> {
    estimate_covariance_with(design, nuisance, theta_hat, JacobianForm::default())
}

pub fn estimate_covariance_with(
    design: AdditiveDesign,
    nuisance: NuisanceSet,
    theta_hat: DVector<f64>,
    jacobian: JacobianForm,
) -> Result<OrthogonalModel, OrthogonalError> {
    let n = design.n();
    let d1 = design.d1();
    if theta_hat.len() != d1 {
        return Err(OrthogonalError::DimensionMismatch(format!(
            "theta has length {}, design has {d1} target columns",
            theta_hat.len()
        )));
    }
    let mut score_residuals = DMatrix::zeros(n, d1);
    let mut j_hat = DVector::zeros(d1);
    let mut score_means = DVector::zeros(d1);
    for l in 0..d1 {
        let nu = nuisance.nu_hat.column(l);
        let g_l = design.z.column(l);
        let eps = partial_response(&design, &nuisance, l) - g_l * theta_hat[l];
        let psi = eps.component_mul(&nu);
        score_means[l] = psi.mean();
        score_residuals.set_column(l, &psi);
        j_hat[l] = match jacobian {
            JacobianForm::ResidualSquare => -nu.norm_squared() / n as f64,
            JacobianForm::Instrument => -g_l.dot(&nu) / n as f64,
        };
        if j_hat[l] >= -MIN_JACOBIAN {
            return Err(OrthogonalError::DegenerateResidual {
                component: l,
                detail: format!("Jacobian entry {:e} is not negative", j_hat[l]),
            });
        }
    }

    let mut sigma_eps_nu = DMatrix::zeros(d1, d1);
    let mut sigma_n = DMatrix::zeros(d1, d1);
    for k in 0..d1 {
        for l in k..d1 {
            let s = score_residuals.column(k).dot(&score_residuals.column(l)) / n as f64;
            sigma_eps_nu[(k, l)] = s;
            sigma_eps_nu[(l, k)] = s;
            let v = s / (j_hat[k] * j_hat[l]);
            sigma_n[(k, l)] = v;
            sigma_n[(l, k)] = v;
        }
    }

    Ok(OrthogonalModel {
        theta_hat,
        j_hat,
        score_residuals,
        sigma_eps_nu,
        sigma_n,
        score_means,
        design,
        nuisance,
    })
}

/// `f̂₁(x) = θ̂ᵀ g̃(x)` with `g̃` centered at the training means.
pub fn predict_f1(model: &OrthogonalModel, grid: &[f64]) -> Result<DVector<f64>, OrthogonalError> {
    let rows = model
        .design
        .g
        .transform_points(grid)
        .map_err(OrthogonalError::spline(Covariate::Target))?;
    Ok(rows * &model.theta_hat)
}

/// Options for [`fit_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub df_own: usize,
    pub df_other: usize,
    pub degree: usize,
    pub penalty: PenaltyConfig,
    pub jacobian: JacobianForm,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            df_own: 7,
            df_other: 4,
            degree: 3,
            penalty: PenaltyConfig::default(),
            jacobian: JacobianForm::default(),
        }
    }
}

/// Design, nuisance fits, score solve and covariance in one call.
pub fn fit_model(
    x_target: &[f64],
    x_others: &DMatrix<f64>,
    y: &[f64],
    options: &FitOptions,
) -> Result<OrthogonalModel, OrthogonalError> {
    let design = build_design(
        x_target,
        x_others,
        y,
        options.df_own,
        options.df_other,
        options.degree,
    )?;
    fit_design(design, options)
}

/// Nuisance fits, score solve and covariance for an assembled design.
pub fn fit_design(
    design: AdditiveDesign,
    options: &FitOptions,
) -> Result<OrthogonalModel, OrthogonalError> {
    let nuisance = fit_nuisance(&design, &options.penalty)?;
    let theta = solve_theta(&design, &nuisance)?;
    estimate_covariance_with(design, nuisance, theta, options.jacobian)
}
