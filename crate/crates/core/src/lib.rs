//! Simultaneous confidence bands for one component of a high-dimensional
//! additive regression model.
//!
//! The pipeline: B-spline sieves for every covariate ([`splines`]), a
//! self-tuned weighted lasso with post-lasso refits for the nuisance
//! regressions ([`lasso`]), an orthogonal-score estimator of the target
//! spline coefficients with its plug-in covariance ([`orthogonal`]), and a
//! Gaussian multiplier bootstrap for the sup-norm critical value
//! ([`bands`]). [`simulate`] reproduces the Monte Carlo coverage study.

pub mod bands;
pub mod lasso;
pub mod numeric;
pub mod orthogonal;
pub mod rng;
pub mod simulate;
pub mod splines;

pub use bands::{BandConfig, BandError, BandResult};
pub use lasso::{LassoError, LoadingStart, PenaltyConfig, PenalizedFit, RefreshResidual};
pub use orthogonal::{
    DesignSpec, FitOptions, JacobianForm, OrthogonalError, OrthogonalModel, TermSpec,
};
pub use simulate::{
    ComponentPlan, ComponentRecord, DgpConfig, NoiseDriver, SimulationError, SimulationReport,
    StudyConfig,
};
pub use splines::{BasisMatrix, SplineError, SplineSpec};
