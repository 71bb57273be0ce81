//! Deterministic inputs shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use splineband::simulate::{gen_design, gen_response};
use splineband::rng::stream;
use splineband::DgpConfig;

/// A simulated design and response of the given size.
pub fn simulated(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let dgp = DgpConfig { n, p, seed, ..DgpConfig::default() };
    let x = gen_design(&dgp, &mut stream(seed, 0)).expect("valid configuration");
    let y = gen_response(&x, &dgp, 1, &mut stream(seed, 1)).expect("valid configuration");
    (x, y)
}
