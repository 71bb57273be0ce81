//! Univariate B-spline bases with clamped knots.
//!
//! A [`SplineSpec`] fixes the degree, the interior knots and the support
//! interval; evaluation uses the Cox–de Boor triangular recursion on the
//! clamped knot vector, so at most `degree + 1` basis functions are nonzero at
//! any point and the uncentered basis sums to one everywhere on the support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("invalid spline configuration: {0}")]
    InvalidConfiguration(String),

    #[error("degenerate knots: quantile {quantile} gives knot {knot}, which is not strictly between its neighbours")]
    DegenerateKnots { quantile: f64, knot: f64 },

    #[error("need at least {required} distinct values to place knots, found {found}")]
    TooFewDistinct { required: usize, found: usize },

    #[error("x = {x} lies outside the spline support [{lo}, {hi}]")]
    OutOfSupport { x: f64, lo: f64, hi: f64 },
}

/// Knot configuration for one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    degree: usize,
    interior_knots: Vec<f64>,
    boundary_lo: f64,
    boundary_hi: f64,
}

impl SplineSpec {
    pub fn new(
        degree: usize,
        interior_knots: Vec<f64>,
        boundary_lo: f64,
        boundary_hi: f64,
    ) -> Result<Self, SplineError> {
        if !(boundary_lo.is_finite() && boundary_hi.is_finite()) || boundary_lo >= boundary_hi {
            return Err(SplineError::InvalidConfiguration(format!(
                "boundary ({boundary_lo}, {boundary_hi}) must be finite with lo < hi"
            )));
        }
        let mut prev = boundary_lo;
        for &k in &interior_knots {
            if !(k > prev && k < boundary_hi) {
                return Err(SplineError::InvalidConfiguration(format!(
                    "interior knot {k} must be strictly increasing and inside ({boundary_lo}, {boundary_hi})"
                )));
            }
            prev = k;
        }
        Ok(Self {
            degree,
            interior_knots,
            boundary_lo,
            boundary_hi,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn support(&self) -> (f64, f64) {
        (self.boundary_lo, self.boundary_hi)
    }

    /// Number of basis functions: interior knots + degree + 1.
    pub fn dimension(&self) -> usize {
        self.interior_knots.len() + self.degree + 1
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.boundary_lo && x <= self.boundary_hi
    }

    /// Full knot vector with boundary knots repeated `degree + 1` times.
    pub fn knot_vector(&self) -> Vec<f64> {
        let reps = self.degree + 1;
        let mut t = Vec::with_capacity(self.interior_knots.len() + 2 * reps);
        t.extend(std::iter::repeat_n(self.boundary_lo, reps));
        t.extend_from_slice(&self.interior_knots);
        t.extend(std::iter::repeat_n(self.boundary_hi, reps));
        t
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" rule). `sorted` must be ascending and nonempty.
pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Places `df - degree - 1` interior knots at equally spaced empirical
/// quantiles of `x`, with boundary knots at the data range.
pub fn knots_from_data(x: &[f64], df: usize, degree: usize) -> Result<SplineSpec, SplineError> {
    if df < degree + 1 {
        return Err(SplineError::InvalidConfiguration(format!(
            "df = {df} is below degree + 1 = {}",
            degree + 1
        )));
    }
    if x.is_empty() {
        return Err(SplineError::InvalidConfiguration("no data to place knots".into()));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(SplineError::InvalidConfiguration(format!(
            "non-finite value {bad} in knot data"
        )));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];

    let n_interior = df - degree - 1;
    let mut knots = Vec::with_capacity(n_interior);
    let mut prev = lo;
    for i in 1..=n_interior {
        let prob = i as f64 / (n_interior + 1) as f64;
        let knot = quantile_sorted(&sorted, prob);
        if !(knot > prev && knot < hi) {
            return Err(SplineError::DegenerateKnots {
                quantile: prob,
                knot,
            });
        }
        knots.push(knot);
        prev = knot;
    }

    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < df {
        return Err(SplineError::TooFewDistinct {
            required: df,
            found: distinct.len(),
        });
    }

    SplineSpec::new(degree, knots, lo, hi)
}

/// Evaluates every basis function at `x`.
pub fn eval_basis(spec: &SplineSpec, x: f64) -> Result<DVector<f64>, SplineError> {
    let mut out = DVector::zeros(spec.dimension());
    eval_basis_into(spec, x, out.as_mut_slice())?;
    Ok(out)
}

/// Writes the basis at `x` into `out` (length must equal the dimension).
pub(crate) fn eval_basis_into(spec: &SplineSpec, x: f64, out: &mut [f64]) -> Result<(), SplineError> {
    if !spec.contains(x) {
        return Err(SplineError::OutOfSupport {
            x,
            lo: spec.boundary_lo,
            hi: spec.boundary_hi,
        });
    }
    let p = spec.degree;
    let t = spec.knot_vector();
    let n_basis = spec.dimension();
    debug_assert_eq!(out.len(), n_basis);
    out.iter_mut().for_each(|v| *v = 0.0);

    // Knot span: largest s in [p, n_basis - 1] with t[s] <= x < t[s + 1];
    // the right endpoint belongs to the last span.
    let span = if x >= spec.boundary_hi {
        n_basis - 1
    } else {
        let mut s = p;
        while s < n_basis - 1 && x >= t[s + 1] {
            s += 1;
        }
        s
    };

    let mut nonzero = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    nonzero[0] = 1.0;
    for j in 1..=p {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = nonzero[r] / (right[r + 1] + left[j - r]);
            nonzero[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        nonzero[j] = saved;
    }
    out[span - p..=span].copy_from_slice(&nonzero);
    Ok(())
}

/// Basis evaluated at a sample, optionally with the first column dropped
/// and/or columns centered at their empirical means.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub spec: SplineSpec,
    /// Empirical column means subtracted from `values`; `None` if uncentered.
    pub column_means: Option<DVector<f64>>,
    /// Whether basis function 0 has been removed from `values`.
    pub drops_first: bool,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.values.ncols()
    }

    /// Removes the first basis function, giving an intercept-free basis
    /// whose centered columns are linearly independent.
    pub fn drop_first_column(mut self) -> Self {
        if self.drops_first {
            return self;
        }
        self.values = self.values.remove_column(0);
        self.column_means = self.column_means.map(|m| m.remove_row(0));
        self.drops_first = true;
        self
    }

    /// Evaluates a fresh point with the same transformation that produced
    /// the matrix rows (first-column drop, then subtraction of the recorded means).
    pub fn transform_point(&self, x: f64) -> Result<DVector<f64>, SplineError> {
        let full = eval_basis(&self.spec, x)?;
        let mut row = if self.drops_first {
            full.remove_row(0)
        } else {
            full
        };
        if let Some(means) = &self.column_means {
            row -= means;
        }
        Ok(row)
    }

    /// Transformed rows for every point in `xs`, one row per point.
    pub fn transform_points(&self, xs: &[f64]) -> Result<DMatrix<f64>, SplineError> {
        let mut out = DMatrix::zeros(xs.len(), self.dimension());
        for (i, &x) in xs.iter().enumerate() {
            let row = self.transform_point(x)?;
            out.row_mut(i).copy_from(&row.transpose());
        }
        Ok(out)
    }
}

/// Evaluates the basis at every point of `x`; with `center` the empirical
/// column means are subtracted and recorded.
pub fn build_matrix(spec: &SplineSpec, x: &[f64], center: bool) -> Result<BasisMatrix, SplineError> {
    let dim = spec.dimension();
    let mut values = DMatrix::zeros(x.len(), dim);
    let mut buf = vec![0.0; dim];
    for (i, &xi) in x.iter().enumerate() {
        eval_basis_into(spec, xi, &mut buf)?;
        for (j, &b) in buf.iter().enumerate() {
            values[(i, j)] = b;
        }
    }
    let column_means = if center && !x.is_empty() {
        let means = values.row_mean().transpose();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        Some(means)
    } else {
        None
    };
    Ok(BasisMatrix {
        values,
        spec: spec.clone(),
        column_means,
        drops_first: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn four_df_cubic_has_no_interior_knots() {
        let spec = knots_from_data(&grid(100), 4, 3).unwrap();
        assert!(spec.interior_knots().is_empty());
        assert_eq!(spec.support(), (0.0, 1.0));
        assert_eq!(spec.dimension(), 4);
    }

    #[test]
    fn seven_df_cubic_places_quartile_knots() {
        // Type-7 quantiles of (i/99): h = 99p, so p = 1/4, 1/2, 3/4 land on 0.25, 0.5, 0.75.
        let spec = knots_from_data(&grid(100), 7, 3).unwrap();
        let k = spec.interior_knots();
        assert_eq!(k.len(), 3);
        for (got, want) in k.iter().zip([0.25, 0.5, 0.75]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(spec.dimension(), 7);
    }

    #[test]
    fn tied_data_gives_degenerate_knots() {
        let err = knots_from_data(&[0.0, 0.0, 0.0, 1.0], 5, 3).unwrap_err();
        assert!(matches!(err, SplineError::DegenerateKnots { quantile, .. } if quantile == 0.5));
    }

    #[test]
    fn df_below_order_is_rejected() {
        let err = knots_from_data(&grid(10), 3, 3).unwrap_err();
        assert!(matches!(err, SplineError::InvalidConfiguration(_)));
    }

    #[test]
    fn too_few_distinct_values() {
        let x = [0.0, 0.0, 1.0, 1.0, 2.0];
        let err = knots_from_data(&x, 4, 3).unwrap_err();
        assert_eq!(err, SplineError::TooFewDistinct { required: 4, found: 3 });
    }

    #[test]
    fn degree_zero_indicator() {
        let spec = SplineSpec::new(0, vec![], -1.0, 2.0).unwrap();
        for x in [-1.0, 0.3, 2.0] {
            assert_eq!(eval_basis(&spec, x).unwrap().as_slice(), &[1.0]);
        }
    }

    #[test]
    fn linear_hat_functions() {
        let spec = SplineSpec::new(1, vec![0.5], 0.0, 1.0).unwrap();
        let b = eval_basis(&spec, 0.25).unwrap();
        assert_eq!(b.as_slice(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn clamped_endpoints_are_exact() {
        let spec = SplineSpec::new(3, vec![0.2, 0.7], 0.0, 1.0).unwrap();
        let lo = eval_basis(&spec, 0.0).unwrap();
        assert_eq!(lo[0], 1.0);
        assert!(lo.iter().skip(1).all(|&v| v == 0.0));
        let hi = eval_basis(&spec, 1.0).unwrap();
        assert_eq!(hi[hi.len() - 1], 1.0);
        assert!(hi.iter().take(hi.len() - 1).all(|&v| v == 0.0));
    }

    #[test]
    fn evaluation_outside_support_fails() {
        let spec = SplineSpec::new(3, vec![0.5], 0.0, 1.0).unwrap();
        assert!(matches!(
            eval_basis(&spec, 1.0 + 1e-9),
            Err(SplineError::OutOfSupport { .. })
        ));
        assert!(eval_basis(&spec, -0.1).is_err());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(SplineSpec::new(3, vec![0.5, 0.4], 0.0, 1.0).is_err());
        assert!(SplineSpec::new(3, vec![1.0], 0.0, 1.0).is_err());
        assert!(SplineSpec::new(3, vec![], 1.0, 1.0).is_err());
    }

    #[test]
    fn single_row_matrix_is_partition_of_unity() {
        let spec = SplineSpec::new(3, vec![0.3, 0.6], 0.0, 1.0).unwrap();
        let m = build_matrix(&spec, &[0.42], false).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_abs_diff_eq!(m.values.row(0).sum(), 1.0, epsilon = 1e-12);
        assert!(m.column_means.is_none());
    }

    #[test]
    fn centering_zeroes_column_means() {
        let x: Vec<f64> = (0..57).map(|i| ((i * 37) % 57) as f64 / 56.0).collect();
        let spec = knots_from_data(&x, 8, 3).unwrap();
        let m = build_matrix(&spec, &x, true).unwrap();
        for col in m.values.column_iter() {
            assert!(col.mean().abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_point_uses_recorded_means() {
        let x = grid(40);
        let spec = knots_from_data(&x, 6, 3).unwrap();
        let m = build_matrix(&spec, &x, true).unwrap();
        let fresh = 0.3141;
        let got = m.transform_point(fresh).unwrap();
        let want = eval_basis(&spec, fresh).unwrap() - m.column_means.as_ref().unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn dropping_first_column_keeps_transform_consistent() {
        let x = grid(30);
        let spec = knots_from_data(&x, 6, 3).unwrap();
        let m = build_matrix(&spec, &x, true).unwrap().drop_first_column();
        assert_eq!(m.dimension(), 5);
        let row = m.transform_point(x[11]).unwrap();
        for j in 0..5 {
            assert_abs_diff_eq!(row[j], m.values[(11, j)], epsilon = 1e-15);
        }
    }
}
