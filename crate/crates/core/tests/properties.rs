//! Property tests for the basis, the lasso and reproducibility.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use splineband::lasso::{lasso_solve, post_lasso, refresh_loadings, weighted_lasso, LoadingStart};
use splineband::numeric::{linspace, min_norm_lstsq};
use splineband::splines::{eval_basis, knots_from_data, SplineSpec};
use splineband::PenaltyConfig;

fn spec_strategy() -> impl Strategy<Value = SplineSpec> {
    (0usize..=3, prop::collection::vec(0.01f64..1.0, 0..8), -3.0f64..0.0, 0.5f64..4.0).prop_map(
        |(degree, gaps, lo, width)| {
            let total: f64 = gaps.iter().sum::<f64>() + 1.0;
            let mut acc = lo;
            let interior = gaps
                .iter()
                .map(|g| {
                    acc += width * g / total;
                    acc
                })
                .collect();
            SplineSpec::new(degree, interior, lo, lo + width).unwrap()
        },
    )
}

fn design_strategy(max_n: usize, max_p: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (5..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * p),
            prop::collection::vec(-3.0f64..3.0, n),
        )
            .prop_map(move |(xs, ys)| (DMatrix::from_vec(n, p, xs), DVector::from_vec(ys)))
    })
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64, loadings: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let r = y - x * beta;
    0.5 * r.norm_squared() / n + lambda / n * beta.iter().zip(loadings.iter()).map(|(b, l)| l * b.abs()).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_is_a_partition_of_unity(spec in spec_strategy(), u in 0.0f64..=1.0) {
        let (lo, hi) = spec.support();
        let b = eval_basis(&spec, (lo + u * (hi - lo)).min(hi)).unwrap();
        prop_assert!((b.sum() - 1.0).abs() < 1e-10);
        prop_assert!(b.iter().all(|&v| v >= -1e-14));
        prop_assert!(b.iter().filter(|&&v| v != 0.0).count() <= spec.degree() + 1);
    }

    #[test]
    fn cubic_basis_reproduces_cubics(
        spec in spec_strategy().prop_filter("cubic", |s| s.degree() == 3),
        c in prop::array::uniform4(-2.0f64..2.0),
    ) {
        let (lo, hi) = spec.support();
        let pts = linspace(lo, hi, 200);
        let basis = DMatrix::from_fn(pts.len(), spec.dimension(), |i, j| eval_basis(&spec, pts[i]).unwrap()[j]);
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|&x| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x));
        let coef = min_norm_lstsq(&basis, &y);
        prop_assert!((&basis * coef - y).amax() < 1e-8);
    }

    #[test]
    fn quantile_knots_stay_inside_the_data(xs in prop::collection::vec(-5.0f64..5.0, 30..80), df in 4usize..8) {
        let spec = knots_from_data(&xs, df, 3).unwrap();
        let (lo, hi) = spec.support();
        prop_assert_eq!(lo, xs.iter().copied().fold(f64::INFINITY, f64::min));
        prop_assert_eq!(hi, xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        prop_assert_eq!(spec.dimension(), df);
        prop_assert!(spec.interior_knots().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lasso_solutions_are_certified((x, y) in design_strategy(40, 12), scale in 0.01f64..2.0) {
        let n = x.nrows() as f64;
        let loadings = DVector::from_fn(x.ncols(), |j, _| 0.5 + (j % 3) as f64 * 0.25);
        let lambda_max = (x.transpose() * &y).amax();
        let lambda = scale * lambda_max;
        let sol = lasso_solve(&x, &y, lambda, &loadings).unwrap();
        prop_assert!(sol.kkt_gap <= 1e-6);

        // Subgradient conditions checked independently of the solver.
        let grad = x.transpose() * (&y - &x * &sol.coefficients) / n;
        for j in 0..x.ncols() {
            let t = lambda / n * loadings[j];
            if x.column(j).norm_squared() == 0.0 {
                continue;
            }
            if sol.coefficients[j] != 0.0 {
                prop_assert!((grad[j] - t * sol.coefficients[j].signum()).abs() <= 1e-6);
            } else {
                prop_assert!(grad[j].abs() <= t + 1e-6);
            }
        }

        // Small moves never lower the objective.
        let f0 = objective(&x, &y, &sol.coefficients, lambda, &loadings);
        for j in 0..x.ncols() {
            for step in [-1e-3, 1e-3] {
                let mut b = sol.coefficients.clone();
                b[j] += step;
                prop_assert!(objective(&x, &y, &b, lambda, &loadings) >= f0 - 1e-10);
            }
        }
    }

    #[test]
    fn post_lasso_never_increases_the_residual_sum((x, y) in design_strategy(40, 8)) {
        let config = PenaltyConfig { c_lambda: 1.01, gamma: Some(0.5), ..PenaltyConfig::default() };
        let fit = weighted_lasso(&x, &y, &config).unwrap();
        let post = post_lasso(&x, &y, &fit.support).unwrap();
        let rss = |b: &DVector<f64>| (&y - &x * b).norm_squared();
        prop_assert!(rss(&post) <= rss(&fit.coefficients) + 1e-9);
        prop_assert_eq!(post, fit.post_coefficients);
    }

    #[test]
    fn refreshed_loadings_scale_with_the_residual((x, y) in design_strategy(30, 6), s in 0.1f64..10.0) {
        let beta = DVector::from_fn(x.ncols(), |j, _| 0.3 * j as f64 - 0.5);
        let base = refresh_loadings(&x, &y, &beta).unwrap();
        let scaled = refresh_loadings(&x, &(&y * s), &(&beta * s)).unwrap();
        for j in 0..x.ncols() {
            if base[j] > 1e-3 {
                prop_assert!((scaled[j] - s * base[j]).abs() <= 1e-9 * s * base[j]);
            }
        }
    }

    #[test]
    fn marginal_start_is_scale_equivariant((x, y) in design_strategy(40, 6), s in 0.2f64..5.0) {
        let config = PenaltyConfig {
            c_lambda: 1.01,
            gamma: Some(0.5),
            loading_start: LoadingStart::Marginal,
            ..PenaltyConfig::default()
        };
        let a = weighted_lasso(&x, &y, &config);
        let b = weighted_lasso(&x, &(&y * s), &config);
        if let (Ok(a), Ok(b)) = (a, b) {
            let diff = (&a.coefficients * s - &b.coefficients).amax();
            prop_assert!(diff <= 1e-5 * (1.0 + s * a.coefficients.amax()), "diff {diff}");
        }
    }

    #[test]
    fn weighted_lasso_is_deterministic((x, y) in design_strategy(40, 10)) {
        let config = PenaltyConfig::default();
        prop_assert_eq!(weighted_lasso(&x, &y, &config).ok(), weighted_lasso(&x, &y, &config).ok());
    }
}
