//! K-fold search over spline degrees of freedom.
//!
//! For every `(df_own, df_other)` pair the full estimator is refit on each
//! training split and scored by the out-of-fold squared error of the fitted
//! additive surface against the response centered at the training mean.
//! Knot positions come from the full table so held-out points never fall
//! outside a training basis.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use splineband::orthogonal::fit_design;
use splineband::rng::stream;
use splineband::FitOptions;
use thiserror::Error;

use crate::data::{DataError, DataTable, Split};
use crate::pipeline::{design_for_rows, design_spec, PipelineError};

#[derive(Debug, Error)]
pub enum CvError {
    #[error("invalid cross-validation setup: {0}")]
    InvalidConfiguration(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("every (df_own, df_other) pair failed; first error: {first_error}")]
    AllFailed { first_error: String },
}

#[derive(Debug, Clone)]
pub struct CvSettings {
    pub response: String,
    pub component: String,
    pub own_grid: Vec<usize>,
    pub other_grid: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    /// Template for every fit; its `df_own` and `df_other` are overwritten.
    pub fit: FitOptions,
    pub linear: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub df_own: usize,
    pub df_other: usize,
    /// Mean over folds of the out-of-fold MSE; absent when a fold failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub response: String,
    pub component: String,
    pub folds: usize,
    pub seed: u64,
    pub surface: Vec<CvCell>,
    pub best_df_own: usize,
    pub best_df_other: usize,
    pub best_mse: f64,
}

/// Fold label of every row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0));
    let mut label = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        label[i] = k % folds;
    }
    label
}

impl CvSettings {
    fn validate(&self, n: usize) -> Result<(), CvError> {
        let bad = |msg: String| Err(CvError::InvalidConfiguration(msg));
        if self.own_grid.is_empty() || self.other_grid.is_empty() {
            return bad("grids must be nonempty".into());
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        let max_own = *self.own_grid.iter().max().unwrap_or(&0);
        let needed = 5 * max_own + self.folds;
        if n < needed {
            return bad(format!("n = {n} is below 5 * max(own grid) + folds = {needed}"));
        }
        Ok(())
    }
}

fn pair_mse(split: &Split, labels: &[usize], settings: &CvSettings, fit: &FitOptions) -> Result<f64, PipelineError> {
    let spec = design_spec(split, fit, &settings.linear)?;
    let mut total = 0.0;
    for k in 0..settings.folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != k).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        let design = design_for_rows(&spec, split, Some(&train))?;
        let y_mean = design.y_mean;
        let model = fit_design(design, fit)?;
        let xt: Vec<f64> = test.iter().map(|&i| split.x_target[i]).collect();
        let fitted = model.predict_surface(&xt, &split.x_others.select_rows(&test))?;
        let sse: f64 = test
            .iter()
            .zip(fitted.iter())
            .map(|(&i, f)| (split.y[i] - y_mean - f).powi(2))
            .sum();
        total += sse / test.len() as f64;
    }
    Ok(total / settings.folds as f64)
}

pub fn cross_validate_df(table: &DataTable, settings: &CvSettings) -> Result<CvResult, CvError> {
    settings.validate(table.n())?;
    let split = table.split(&settings.response, &settings.component)?;
    let labels = fold_assignment(table.n(), settings.folds, settings.seed);

    let mut surface = Vec::with_capacity(settings.own_grid.len() * settings.other_grid.len());
    for &df_own in &settings.own_grid {
        for &df_other in &settings.other_grid {
            let fit = FitOptions {
                df_own,
                df_other,
                ..settings.fit.clone()
            };
            let (mse, error) = match pair_mse(&split, &labels, settings, &fit) {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            surface.push(CvCell {
                df_own,
                df_other,
                mse,
                error,
            });
        }
    }

    let best = surface
        .iter()
        .filter_map(|c| c.mse.map(|m| (c, m)))
        .fold(None::<(&CvCell, f64)>, |acc, (c, m)| match acc {
            Some((_, bm)) if bm <= m => acc,
            _ => Some((c, m)),
        });
    let Some((cell, best_mse)) = best else {
        let first_error = surface.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(CvError::AllFailed { first_error });
    };
    Ok(CvResult {
        response: settings.response.clone(),
        component: settings.component.clone(),
        folds: settings.folds,
        seed: settings.seed,
        best_df_own: cell.df_own,
        best_df_other: cell.df_other,
        best_mse,
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use std::path::PathBuf;

    fn toy_table(n: usize, seed: u64) -> DataTable {
        let mut rng = stream(seed, 0);
        let mut values = DMatrix::zeros(n, 4);
        for i in 0..n {
            let x1: f64 = rng.random_range(-2.0..2.0);
            let x2: f64 = rng.random_range(-2.0..2.0);
            let x3: f64 = rng.random_range(-2.0..2.0);
            values[(i, 1)] = x1;
            values[(i, 2)] = x2;
            values[(i, 3)] = x3;
            values[(i, 0)] = x1.powi(3) - x1 + 0.5 * x2 + 0.3 * rng.random::<f64>();
        }
        DataTable {
            names: vec!["y".into(), "x1".into(), "x2".into(), "x3".into()],
            values,
            source: PathBuf::from("toy"),
        }
    }

    fn settings(own: Vec<usize>, other: Vec<usize>) -> CvSettings {
        CvSettings {
            response: "y".into(),
            component: "x1".into(),
            own_grid: own,
            other_grid: other,
            folds: 5,
            seed: 9,
            fit: FitOptions::default(),
            linear: Vec::new(),
        }
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, 4);
        assert_eq!(a, fold_assignment(23, 5, 4));
        assert_ne!(a, fold_assignment(23, 5, 5));
        for k in 0..5 {
            let size = a.iter().filter(|&&f| f == k).count();
            assert!(size == 4 || size == 5);
        }
    }

    #[test]
    fn singleton_grid_returns_that_pair() {
        let r = cross_validate_df(&toy_table(120, 1), &settings(vec![5], vec![4])).unwrap();
        assert_eq!((r.best_df_own, r.best_df_other), (5, 4));
        assert_eq!(r.surface.len(), 1);
        assert_eq!(r.surface[0].mse, Some(r.best_mse));
    }

    #[test]
    fn best_pair_attains_surface_minimum() {
        let r = cross_validate_df(&toy_table(150, 2), &settings(vec![4, 6, 8], vec![4, 5])).unwrap();
        let min = r.surface.iter().filter_map(|c| c.mse).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_mse, min);
        let again = cross_validate_df(&toy_table(150, 2), &settings(vec![4, 6, 8], vec![4, 5])).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn rejects_bad_grids() {
        let t = toy_table(60, 3);
        assert!(matches!(
            cross_validate_df(&t, &settings(vec![], vec![4])),
            Err(CvError::InvalidConfiguration(_))
        ));
        // 5 * 12 + 5 = 65 > 60.
        assert!(matches!(
            cross_validate_df(&t, &settings(vec![12], vec![4])),
            Err(CvError::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn all_failed_pairs() {
        // df_other = 1 is below the cubic minimum for every pair.
        let err = cross_validate_df(&toy_table(80, 4), &settings(vec![4], vec![1])).unwrap_err();
        assert!(matches!(err, CvError::AllFailed { .. }));
    }
}
