mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use saddleprox::nalgebra::{DMatrix, DVector};
use saddleprox::prox::golden_section_prox;
use saddleprox::{BoxQuadratic, ElasticNet, ProxFunction, ProxSpec, QuadraticFunction, ShiftedSquare};

use common::v;

#[test]
fn shifted_square_examples() {
    let f = ShiftedSquare::new(1.0, v(&[0.0])).unwrap();
    assert_relative_eq!(f.prox(1.0, &v(&[2.0])).unwrap()[0], 1.0);
    let f = ShiftedSquare::new(2.0, v(&[1.0])).unwrap();
    assert_relative_eq!(f.prox(0.5, &v(&[3.0])).unwrap()[0], 2.0, epsilon = 1e-15);
    assert_relative_eq!(f.prox(0.5, &v(&[1.0])).unwrap()[0], 1.0);
    let brute = golden_section_prox(|p, q| (p - q) * (p + q - 2.0), 0.5, 3.0, None).unwrap();
    assert!((brute - 2.0).abs() < 1e-8);
}

#[test]
fn quadratic_examples() {
    let id = QuadraticFunction::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
    assert_relative_eq!(id.prox(1.0, &v(&[2.0, 4.0])).unwrap(), v(&[1.0, 2.0]), epsilon = 1e-15);
    let d = QuadraticFunction::new(DMatrix::from_diagonal(&v(&[1.0, 3.0])), DVector::zeros(2)).unwrap();
    assert_relative_eq!(d.prox(1.0, &v(&[2.0, 4.0])).unwrap(), v(&[1.0, 1.0]), epsilon = 1e-15);
}

fn coordinate_descent(a: &DMatrix<f64>, lin: &DVector<f64>, tau: f64, vv: &DVector<f64>) -> DVector<f64> {
    // minimizes 1/2 u'Au + lin'u + |u - v|^2 / (2 tau) one coordinate at a time
    let n = vv.len();
    let mut u = vv.clone();
    for _ in 0..100_000 {
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)] * u[j]).sum();
            u[i] = (vv[i] / tau - lin[i] - off) / (a[(i, i)] + 1.0 / tau);
        }
        let grad = a * &u + lin + (&u - vv) / tau;
        if grad.norm() < 1e-12 {
            break;
        }
    }
    u
}

#[test]
fn random_spd_quadratic_against_coordinate_descent() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let r = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let a = r.tr_mul(&r) + DMatrix::identity(4, 4) * 0.5;
        let lin = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let vv = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
        let f = QuadraticFunction::new(a.clone(), lin.clone()).unwrap();
        let tau = 0.7;
        let u = f.prox(tau, &vv).unwrap();
        let residual = (DMatrix::identity(4, 4) + &a * tau) * &u - (&vv - &lin * tau);
        assert!(residual.norm() <= 1e-10, "{}", residual.norm());
        let cd = coordinate_descent(&a, &lin, tau, &vv);
        assert!((&u - &cd).amax() <= 1e-6);
    }
}

#[test]
fn elastic_net_examples() {
    let f = ElasticNet::new(1, 1.0, 1.0).unwrap();
    assert_relative_eq!(f.prox(1.0, &v(&[3.0])).unwrap()[0], 1.0, epsilon = 1e-15);
    assert_eq!(f.prox(1.0, &v(&[0.5])).unwrap()[0], 0.0);
    let brute = golden_section_prox(|p, q| p.abs() - q.abs() + 0.5 * (p - q) * (p + q), 1.0, 3.0, None).unwrap();
    assert!((brute - 1.0).abs() < 1e-8);
}

#[test]
fn box_examples() {
    let f = BoxQuadratic::new(1.0, v(&[-1.0]), v(&[1.0])).unwrap();
    assert_eq!(f.prox(1.0, &v(&[4.0])).unwrap()[0], 1.0);
    assert_eq!(f.prox(1.0, &v(&[0.0])).unwrap()[0], 0.0);
    let f = BoxQuadratic::new(2.0, v(&[0.5]), v(&[2.0])).unwrap();
    assert_eq!(f.prox(0.25, &v(&[0.3])).unwrap()[0], 0.5);
    // grid over [l, u]
    let obj = |u: f64| u * u + (u - 0.3) * (u - 0.3) / 0.5;
    let best = (0..=1_500_000)
        .map(|i| 0.5 + i as f64 * 1e-6)
        .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
        .unwrap();
    assert!((best - 0.5).abs() <= 1e-6);
}

#[test]
fn golden_section_examples() {
    let half_sq = |p: f64, q: f64| 0.5 * (p - q) * (p + q);
    assert!((golden_section_prox(half_sq, 1.0, 2.0, Some((-10.0, 10.0))).unwrap() - 1.0).abs() < 1e-8);
    assert!(golden_section_prox(half_sq, 1.0, 0.0, None).unwrap().abs() < 1e-8);
}

#[test]
fn specs_build_working_functions() {
    let text = r#"[
        {"kind": "quadratic", "dim": 2, "matrix": [2, 0, 0, 2], "linear": [1, -1]},
        {"kind": "shifted_sq", "mu": 3, "center": [1, 2]},
        {"kind": "elastic_net", "dim": 2, "l1": 0.5, "mu": 1},
        {"kind": "box_quadratic", "mu": 1, "lower": [-1, -1], "upper": [1, 1]}
    ]"#;
    let specs: Vec<ProxSpec> = serde_json::from_str(text).unwrap();
    for s in specs {
        let f = s.build().unwrap();
        assert_eq!(f.dim(), 2);
        assert_eq!(f.spec().unwrap(), s);
        assert!(f.prox(0.5, &v(&[0.3, -0.2])).unwrap().iter().all(|x| x.is_finite()));
    }
    assert!(serde_json::from_str::<ProxSpec>(r#"{"kind": "huber", "dim": 1}"#).is_err());
}

fn catalog(mu: f64, c: f64, l1: f64) -> Vec<Box<dyn ProxFunction>> {
    vec![
        Box::new(ShiftedSquare::new(mu, v(&[c, -c, 0.5 * c])).unwrap()),
        Box::new(
            QuadraticFunction::new(
                DMatrix::from_row_slice(3, 3, &[mu + 1.0, 0.5, 0.0, 0.5, mu + 1.0, 0.2, 0.0, 0.2, mu]),
                v(&[c, 0.0, -c]),
            )
            .unwrap(),
        ),
        Box::new(ElasticNet::new(3, l1, mu).unwrap()),
        Box::new(BoxQuadratic::new(mu, v(&[-1.0, -2.0, c.min(0.0)]), v(&[1.0, 0.5, c.max(0.0) + 1.0])).unwrap()),
    ]
}

fn vec3() -> impl Strategy<Value = DVector<f64>> {
    prop::array::uniform3(-10.0..10.0f64).prop_map(|a| v(&a))
}

proptest! {
    #[test]
    fn prox_is_nonexpansive(mu in 0.1..10.0f64, c in -3.0..3.0f64, l1 in 0.0..3.0f64,
                            tau in 0.01..10.0f64, v1 in vec3(), v2 in vec3()) {
        for f in catalog(mu, c, l1) {
            let d = (f.prox(tau, &v1).unwrap() - f.prox(tau, &v2).unwrap()).norm();
            prop_assert!(d <= (&v1 - &v2).norm() * (1.0 + 1e-12) + 1e-12, "{}", f.kind());
        }
    }

    #[test]
    fn prox_satisfies_resolvent_inclusion(mu in 0.1..10.0f64, c in -3.0..3.0f64, l1 in 0.0..3.0f64,
                                          tau in 0.01..10.0f64, vv in vec3()) {
        for f in catalog(mu, c, l1) {
            let u = f.prox(tau, &vv).unwrap();
            let w = (&vv - &u) / tau;
            let r = f.subgradient_distance(&u, &w).unwrap();
            prop_assert!(r <= 1e-9 * (1.0 + w.norm()), "{}: {r}", f.kind());
        }
    }

    #[test]
    fn strong_convexity_with_declared_modulus(mu in 0.1..10.0f64, c in -3.0..3.0f64, l1 in 0.0..3.0f64,
                                              x in vec3(), y in vec3(), t in 0.0..1.0f64) {
        for f in catalog(mu, c, l1) {
            let z = &x * t + &y * (1.0 - t);
            let (fx, fy, fz) = (f.value(&x), f.value(&y), f.value(&z));
            if !(fx.is_finite() && fy.is_finite()) {
                continue;
            }
            let rhs = t * fx + (1.0 - t) * fy - 0.5 * f.modulus() * t * (1.0 - t) * (&x - &y).norm_squared();
            prop_assert!(fz <= rhs + 1e-9 * (1.0 + fz.abs().max(rhs.abs())), "{}", f.kind());
        }
    }
}
