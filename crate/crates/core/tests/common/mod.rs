#![allow(dead_code)]

use std::sync::Arc;

use saddleprox::nalgebra::{DMatrix, DVector};
use saddleprox::{DenseCoupling, ProxFunction, QuadraticFunction, SaddleProblem, ShiftedSquare};

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn sq(mu: f64, c: &[f64]) -> Arc<dyn ProxFunction> {
    Arc::new(ShiftedSquare::new(mu, v(c)).unwrap())
}

/// 1-D problem `k x y + g(x) - h(y)` with `g = 1/2 x^2 + a x`, `h = 1/2 y^2`.
pub fn scalar(k: f64, a: f64) -> SaddleProblem {
    let g: Arc<dyn ProxFunction> =
        Arc::new(QuadraticFunction::new(DMatrix::from_element(1, 1, 1.0), v(&[a])).unwrap());
    SaddleProblem::new(
        Arc::new(DenseCoupling::new(DMatrix::from_element(1, 1, k)).unwrap()),
        g,
        sq(1.0, &[0.0]),
    )
    .unwrap()
}
