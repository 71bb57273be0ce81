//! Small numeric helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// Upper-tail standard normal quantile `Q(1 - tail)`, computed as `-Q(tail)`
/// to keep precision when `tail` is tiny.
pub fn normal_upper_quantile(tail: f64) -> f64 {
    -standard_normal().inverse_cdf(tail)
}

pub fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

/// Minimum-norm least-squares solution of `x b = y` via the SVD.
///
/// Singular values below `1e-10 * s_max` are treated as zero, so exactly
/// collinear columns share weight instead of blowing up.
pub fn min_norm_lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if x.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    if s_max <= 0.0 {
        return DVector::zeros(x.ncols());
    }
    svd.solve(y, s_max * 1e-10)
        .expect("both singular vector sets were requested")
}

/// Equally spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}
