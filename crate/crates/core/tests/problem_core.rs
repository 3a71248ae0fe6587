mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddleprox::nalgebra::{DMatrix, DVector};
use saddleprox::problem::estimate_operator_norm;
use saddleprox::{DenseCoupling, DiagonalCoupling, ExtendedValue, LinearCoupling, ProblemDocument, SaddleProblem};

use common::{scalar, sq, v};

#[test]
fn objective_examples() {
    let p = scalar(1.0, 0.0);
    assert_eq!(p.objective(&v(&[1.0]), &v(&[1.0])).unwrap(), ExtendedValue::Finite(1.0));
    assert_eq!(p.objective(&v(&[0.0]), &v(&[0.0])).unwrap(), ExtendedValue::Finite(0.0));
    let p = scalar(1.0, -1.0);
    assert_relative_eq!(p.objective(&v(&[0.5]), &v(&[0.5])).unwrap().to_f64(), -0.25);
}

#[test]
fn norm_examples() {
    let c = DenseCoupling::new(DMatrix::from_diagonal(&v(&[2.0, 1.0]))).unwrap();
    assert!(c.norm_bound() >= 2.0 && c.norm_bound() <= 2.0 * 1.000001);
    let c = DenseCoupling::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
    assert!(c.norm_bound() >= 1.0 && c.norm_bound() <= 1.000001);
}

/// Largest singular value by one-sided Jacobi rotations.
fn jacobi_sigma_max(a: &DMatrix<f64>) -> f64 {
    let mut u = a.clone();
    let n = u.ncols();
    for _ in 0..100 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                if gamma == 0.0 {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (cp, cq) = (u.column(p).clone_owned(), u.column(q).clone_owned());
                u.set_column(p, &(&cp * c - &cq * s));
                u.set_column(q, &(&cp * s + &cq * c));
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    (0..n).map(|j| u.column(j).norm()).fold(0.0, f64::max)
}

#[test]
fn random_norm_matches_jacobi_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
        let est = estimate_operator_norm(&a);
        let s = jacobi_sigma_max(&a);
        assert!((est.estimate - s).abs() <= 1e-6 * s, "{} vs {s}", est.estimate);
        assert!(est.bound >= s);
    }
}

#[test]
fn gap_examples() {
    let p = scalar(1.0, 0.0);
    let (xs, ys) = (v(&[0.0]), v(&[0.0]));
    let gap = |x: &DVector<f64>, y: &DVector<f64>| {
        p.objective(x, &ys).unwrap().to_f64() - p.objective(&xs, y).unwrap().to_f64()
    };
    assert_eq!(gap(&xs, &ys), 0.0);
    let g = gap(&v(&[1.0]), &v(&[1.0]));
    assert_eq!(g, 1.0);
    assert!(g >= 0.5 + 0.5);
}

#[test]
fn declared_norm_below_estimate_rejected() {
    let text = r#"{"version": 1, "n": 1, "m": 1, "k": [2.0],
        "g": {"kind": "shifted_sq", "mu": 1, "center": [0]},
        "h": {"kind": "shifted_sq", "mu": 1, "center": [0]},
        "norm_k": 1.0}"#;
    let doc: ProblemDocument = serde_json::from_str(text).unwrap();
    assert!(doc.build().is_err());
    let ok = text.replace("\"norm_k\": 1.0", "\"norm_k\": 3.0");
    let p = serde_json::from_str::<ProblemDocument>(&ok).unwrap().build().unwrap();
    assert_eq!(p.norm_k(), 3.0);
}

#[test]
fn mismatched_dimensions_rejected() {
    let c = Arc::new(DenseCoupling::new(DMatrix::zeros(2, 3)).unwrap());
    assert!(SaddleProblem::new(c, sq(1.0, &[0.0, 0.0]), sq(1.0, &[0.0, 0.0])).is_err());
}

proptest! {
    #[test]
    fn adjoint_identity(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-3.0..3.0));
        let d = DVector::from_fn(rows.min(cols), |_, _| rng.random_range(-3.0..3.0));
        let couplings: Vec<Box<dyn LinearCoupling>> = vec![
            Box::new(DenseCoupling::new(k).unwrap()),
            Box::new(DiagonalCoupling::new(d, rows, cols).unwrap()),
        ];
        for c in couplings {
            let x = DVector::from_fn(cols, |_, _| rng.random_range(-3.0..3.0));
            let y = DVector::from_fn(rows, |_, _| rng.random_range(-3.0..3.0));
            let lhs = c.apply(&x).dot(&y);
            let rhs = x.dot(&c.apply_adjoint(&y));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            prop_assert!(c.apply(&x).norm() <= c.norm_bound() * x.norm() * (1.0 + 1e-12) + 1e-300);
        }
    }
}
