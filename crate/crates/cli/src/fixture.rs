//! Synthetic housing-style table with thirteen named columns.
//!
//! Twelve regressors are monotone transforms of correlated uniforms; `CHAS`
//! is a 0/1 indicator and should enter a fit as a linear term. `MEDV` is a
//! smooth nonlinear function of `LSTAT` and `RM` plus a few weaker effects
//! and Gaussian noise.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use splineband::rng::stream;
use splineband::simulate::gen_design;
use splineband::DgpConfig;

pub const COLUMNS: [&str; 13] = [
    "MEDV", "LSTAT", "CRIM", "NOX", "TAX", "AGE", "DIST", "RM", "INDUS", "ZN", "BLACK", "PTRATIO", "CHAS",
];

pub const DEFAULT_ROWS: usize = 506;

/// Rows of the table in [`COLUMNS`] order.
pub fn generate(n: usize, seed: u64) -> Vec<[f64; 13]> {
    let dgp = DgpConfig {
        n,
        p: 12,
        corr_base: 0.4,
        seed,
        ..DgpConfig::default()
    };
    let u = gen_design(&dgp, &mut stream(seed, 0)).expect("fixed configuration is valid");
    let mut noise = stream(seed, 1);
    // Map [-2.5, 2.5] to [0, 1].
    let unit = |v: f64| (v + 2.5) / 5.0;
    (0..n)
        .map(|i| {
            let s = |j: usize| unit(u[(i, j)]);
            let lstat = 2.0 + 35.0 * s(0).powf(1.4);
            let crim = 0.01 + 80.0 * s(1).powi(6);
            let nox = 0.38 + 0.5 * s(2);
            let tax = 190.0 + 520.0 * s(3);
            let age = 3.0 + 97.0 * s(4).sqrt();
            let dist = 1.1 + 11.0 * (1.0 - s(5)).powi(2);
            let rm = 3.6 + 5.1 * s(6);
            let indus = 0.5 + 27.0 * s(7);
            let zn = 100.0 * s(8).powi(4);
            let black = 0.3 + 396.6 * (1.0 - s(9).powi(5));
            let ptratio = 12.6 + 9.4 * s(10);
            let chas = if s(11) > 0.93 { 1.0 } else { 0.0 };
            let eps: f64 = noise.sample(StandardNormal);
            let medv = 24.0 - 9.0 * ((lstat - 12.0) / 8.0).tanh() + 3.0 * (rm - 6.2).max(0.0).powi(2)
                - 0.08 * crim
                - 6.0 * (nox - 0.55)
                + 2.5 * chas
                + 2.5 * eps;
            [
                medv, lstat, crim, nox, tax, age, dist, rm, indus, zn, black, ptratio, chas,
            ]
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[[f64; 13]], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS)?;
    for row in rows {
        writer.write_record(row.iter().map(|v| format!("{v:.6}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let a = generate(DEFAULT_ROWS, 3);
        assert_eq!(a.len(), 506);
        assert_eq!(a, generate(DEFAULT_ROWS, 3));
        assert_ne!(a, generate(DEFAULT_ROWS, 4));
        assert!(a.iter().all(|r| r.iter().all(|v| v.is_finite())));
        assert!(a.iter().all(|r| r[12] == 0.0 || r[12] == 1.0));
        assert!(a.iter().any(|r| r[12] == 1.0));
    }
}
