//! Central finite differences for checking hand-written backward passes.

use ndarray::Array2;
use rand_distr::{Distribution, Uniform};

use crate::networks::Mlp;
use crate::rng;

/// Denominator floor for [`max_relative_error`]: entries whose true
/// gradient is (numerically) zero are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// Central-difference gradient of `objective` w.r.t. every parameter of
/// `net`, in the order of [`crate::networks::MlpGrads::values`].
pub fn central_difference(net: &Mlp, step: f64, objective: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.param_count())
        .map(|i| {
            let orig = *probe.params_mut().nth(i).expect("index in range");
            *probe.params_mut().nth(i).unwrap() = orig + step;
            let plus = objective(&probe);
            *probe.params_mut().nth(i).unwrap() = orig - step;
            let minus = objective(&probe);
            *probe.params_mut().nth(i).unwrap() = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)` over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

/// Uniform `[-1, 1)` matrix from a seed.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::seeded(seed);
    let dist = Uniform::new(-1.0, 1.0).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut r))
}
