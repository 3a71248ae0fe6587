mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddleprox::diagnostics::check_gap_lower_bound;
use saddleprox::nalgebra::{DMatrix, DVector};
use saddleprox::oracle::{certify_saddle, generate_instance, min_eigenvalue, random_start, solve_quadratic_saddle};
use saddleprox::planner::plan;
use saddleprox::problem::estimate_operator_norm;
use saddleprox::solver::run;
use saddleprox::{
    DenseCoupling, ElasticNet, Error, GeneratorSpec, PlannerOptions, ProxFunction, QuadraticSaddleInstance, RateMode,
    RunOptions, SaddleProblem,
};

use common::{sq, v};

fn scalar_instance(a: f64) -> QuadraticSaddleInstance {
    let one = |x: f64| DMatrix::from_element(1, 1, x);
    QuadraticSaddleInstance::new(one(1.0), v(&[a]), one(1.0), v(&[0.0]), one(1.0)).unwrap()
}

fn spec(n: usize, m: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        n,
        m,
        mu: 1.0,
        nu: 1.0,
        norm_k: 1.0,
        seed,
    }
}

#[test]
fn scalar_kkt_examples() {
    let c = solve_quadratic_saddle(&scalar_instance(0.0)).unwrap();
    assert_eq!((c.point.x[0], c.point.y[0], c.f_star), (0.0, 0.0, 0.0));
    let c = solve_quadratic_saddle(&scalar_instance(-1.0)).unwrap();
    assert_relative_eq!(c.point.x[0], 0.5, epsilon = 1e-15);
    assert_relative_eq!(c.point.y[0], 0.5, epsilon = 1e-15);
    assert_relative_eq!(c.f_star, -0.25, epsilon = 1e-15);
    // grid check of the saddle inequalities
    let p = scalar_instance(-1.0).to_problem().unwrap();
    for i in -50..=50 {
        let t = v(&[i as f64 * 0.1]);
        assert!(p.objective(&c.point.x, &t).unwrap().to_f64() <= c.f_star + 1e-15);
        assert!(p.objective(&t, &c.point.y).unwrap().to_f64() >= c.f_star - 1e-15);
    }
}

#[test]
fn random_instance_residuals_and_saddle_samples() {
    let (p, inst) = generate_instance(&spec(8, 6, 3)).unwrap();
    let c = solve_quadratic_saddle(&inst).unwrap();
    assert!(c.primal_residual <= 1e-10 && c.dual_residual <= 1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let x = &c.point.x + DVector::from_fn(8, |_, _| rng.random_range(-2.0..2.0));
        let y = &c.point.y + DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
        let tol = 1e-9 * c.f_star.abs().max(1.0);
        assert!(p.objective(&c.point.x, &y).unwrap().to_f64() <= c.f_star + tol);
        assert!(p.objective(&x, &c.point.y).unwrap().to_f64() >= c.f_star - tol);
    }
}

#[test]
fn certificate_accepts_oracle_and_rejects_perturbation() {
    let (p, inst) = generate_instance(&spec(5, 4, 9)).unwrap();
    let c = solve_quadratic_saddle(&inst).unwrap();
    let ok = certify_saddle(&p, &c.point.x, &c.point.y, 1e-10).unwrap();
    assert!(ok.primal_residual <= 1e-10);
    assert_relative_eq!(ok.f_star, c.f_star, max_relative = 1e-12);
    let shifted = c.point.x.add_scalar(0.1);
    match certify_saddle(&p, &shifted, &c.point.y, 1e-8) {
        Err(Error::CertificateRejected { primal, .. }) => assert!(primal >= 0.05, "{primal}"),
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn elastic_net_instance_is_certified_after_solving() {
    let (_, inst) = generate_instance(&spec(6, 5, 21)).unwrap();
    let g: Arc<dyn ProxFunction> = Arc::new(ElasticNet::new(6, 0.5, 1.0).unwrap());
    let p = SaddleProblem::new(
        Arc::new(DenseCoupling::new(inst.k.clone()).unwrap()),
        g,
        sq(1.0, &[1.0, -1.0, 0.5, 2.0, -0.3]),
    )
    .unwrap();
    let r = plan(p.mu(), p.nu(), p.norm_k(), RateMode::IterateK, &PlannerOptions::default()).unwrap();
    let opts = RunOptions {
        max_iter: 100_000,
        displacement_tol: Some(1e-14),
        keep_iterates: true,
        ..Default::default()
    };
    let t = run(&p, &r.plan.params(), DVector::zeros(6), DVector::zeros(5), &opts).unwrap();
    let z = t.last().iterate.as_ref().unwrap();
    let c = certify_saddle(&p, &z.x, &z.y, 1e-8).unwrap();
    assert!(c.primal_residual <= 1e-8 && c.dual_residual <= 1e-8);
}

#[test]
fn generator_meets_targets() {
    for seed in 0..20 {
        let (p, inst) = generate_instance(&spec(1, 1, seed)).unwrap();
        assert!(min_eigenvalue(&inst.a_mat) >= 1.0 - 1e-12);
        assert!(min_eigenvalue(&inst.b_mat) >= 1.0 - 1e-12);
        assert!(estimate_operator_norm(&inst.k).estimate <= 1.000001);
        assert!(p.mu() >= 1.0 - 1e-12);
    }
    let (_, inst) = generate_instance(&GeneratorSpec { norm_k: 0.0, ..spec(3, 2, 1) }).unwrap();
    assert_eq!(inst.k, DMatrix::zeros(2, 3));
}

#[test]
fn generator_and_start_are_deterministic() {
    let a = generate_instance(&spec(7, 4, 42)).unwrap().1;
    let b = generate_instance(&spec(7, 4, 42)).unwrap().1;
    assert_eq!(a, b);
    assert_ne!(a, generate_instance(&spec(7, 4, 43)).unwrap().1);
    assert_eq!(random_start(7, 4, 42), random_start(7, 4, 42));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gap_lower_bound_holds(seed in any::<u64>(), n in 1usize..12, m in 1usize..12,
                             mu in 0.1..5.0f64, nu in 0.1..5.0f64, l in 0.0..4.0f64) {
        let (p, inst) = generate_instance(&GeneratorSpec { n, m, mu, nu, norm_k: l, seed }).unwrap();
        let c = solve_quadratic_saddle(&inst).unwrap();
        prop_assert!(c.primal_residual <= 1e-10 && c.dual_residual <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let pts: Vec<_> = (0..100)
            .map(|_| (
                &c.point.x + DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0)),
                &c.point.y + DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0)),
            ))
            .collect();
        let checks = check_gap_lower_bound(&p, &c.point, &pts, 1e-9).unwrap();
        prop_assert_eq!(checks.len(), 100);
        prop_assert!(checks.iter().all(|c| c.pass));
    }
}
