mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use saddleprox::nalgebra::{DMatrix, DVector};
use saddleprox::oracle::solve_quadratic_saddle;
use saddleprox::planner::plan;
use saddleprox::solver::{run, step};
use saddleprox::{
    DenseCoupling, ErgodicAccumulator, IterateState, PlannerOptions, QuadraticSaddleInstance, RateMode, RunOptions,
    SaddleProblem, StepParams, StopReason,
};

use common::{scalar, sq, v};

fn unit(alpha: f64, beta: f64) -> StepParams {
    StepParams {
        tau: 1.0,
        sigma: 1.0,
        alpha,
        beta,
    }
}

#[test]
fn decoupled_step_halves() {
    let p = scalar(0.0, 0.0);
    for (a, b) in [(0.0, 0.0), (0.5, 3.0), (1.0, 1.0)] {
        let s0 = IterateState::initial(&p, v(&[2.0]), v(&[2.0])).unwrap();
        let s1 = step(&p, &s0, &unit(a, b)).unwrap();
        assert_relative_eq!(s1.x[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s1.y[0], 1.0, epsilon = 1e-15);
    }
}

#[test]
fn hand_traced_step() {
    let p = scalar(1.0, 0.0);
    let s0 = IterateState::initial(&p, v(&[1.0]), v(&[0.0])).unwrap();
    let s1 = step(&p, &s0, &unit(0.0, 0.0)).unwrap();
    assert_eq!(s1.k, 1);
    assert_relative_eq!(s1.y[0], 0.5, epsilon = 1e-15);
    assert_relative_eq!(s1.y_bar[0], 0.5, epsilon = 1e-15);
    assert_relative_eq!(s1.x[0], 0.25, epsilon = 1e-15);
    assert_relative_eq!(s1.x_bar[0], 0.25, epsilon = 1e-15);
    // primal-first order would give x1 = 0.5, y1 = 0.25
    assert!((s1.x[0] - 0.5).abs() > 0.1 && (s1.y[0] - 0.25).abs() > 0.1);
}

#[test]
fn extrapolation_uses_previous_iterates() {
    let p = scalar(1.0, 0.0);
    let s0 = IterateState::initial(&p, v(&[1.0]), v(&[0.0])).unwrap();
    let s1 = step(&p, &s0, &unit(0.5, 2.0)).unwrap();
    // y1 = 0.5, ybar1 = 0.5 + 2 (0.5 - 0) = 1.5, x1 = (1 - 1.5) / 2, xbar1 = x1 + 0.5 (x1 - 1)
    assert_relative_eq!(s1.y_bar[0], 1.5, epsilon = 1e-15);
    assert_relative_eq!(s1.x[0], -0.25, epsilon = 1e-15);
    assert_relative_eq!(s1.x_bar[0], -0.25 + 0.5 * (-1.25), epsilon = 1e-15);
}

#[test]
fn saddle_point_is_a_fixed_point() {
    let p = scalar(1.0, -1.0);
    let s0 = IterateState::initial(&p, v(&[0.5]), v(&[0.5])).unwrap();
    let s1 = step(&p, &s0, &StepParams { tau: 0.3, sigma: 0.7, alpha: 0.8, beta: 0.4 }).unwrap();
    assert!((s1.x[0] - 0.5).abs() < 1e-12 && (s1.y[0] - 0.5).abs() < 1e-12);
}

#[test]
fn planned_scalar_run_converges() {
    let p = scalar(1.0, -1.0);
    let r = plan(p.mu(), p.nu(), p.norm_k(), RateMode::IterateK, &PlannerOptions::default()).unwrap();
    let opts = RunOptions {
        max_iter: 200,
        ..Default::default()
    };
    let t = run(&p, &r.plan.params(), v(&[3.0]), v(&[-2.0]), &RunOptions { keep_iterates: true, ..opts }).unwrap();
    let last = t.last().iterate.as_ref().unwrap();
    assert!(((&last.x - v(&[0.5])).norm_squared() + (&last.y - v(&[0.5])).norm_squared()).sqrt() < 1e-6);
}

#[test]
fn decoupled_run_reaches_each_minimizer() {
    let c = Arc::new(DenseCoupling::new(DMatrix::zeros(2, 2)).unwrap());
    let p = SaddleProblem::new(c, sq(1.0, &[1.0, -2.0]), sq(2.0, &[0.5, 4.0])).unwrap();
    let opts = RunOptions {
        max_iter: 500,
        keep_iterates: true,
        ..Default::default()
    };
    let t = run(&p, &unit(0.5, 0.5), DVector::zeros(2), DVector::zeros(2), &opts).unwrap();
    let z = t.last().iterate.as_ref().unwrap();
    assert_relative_eq!(z.x, v(&[1.0, -2.0]), epsilon = 1e-10);
    assert_relative_eq!(z.y, v(&[0.5, 4.0]), epsilon = 1e-10);
}

#[test]
fn oracle_stop_and_distances() {
    let one = |x: f64| DMatrix::from_element(1, 1, x);
    let inst = QuadraticSaddleInstance::new(one(1.0), v(&[-1.0]), one(1.0), v(&[0.0]), one(1.0)).unwrap();
    let p = inst.to_problem().unwrap();
    let cert = solve_quadratic_saddle(&inst).unwrap();
    let r = plan(1.0, 1.0, 1.0, RateMode::IterateK, &PlannerOptions::default()).unwrap();
    let opts = RunOptions {
        max_iter: 10_000,
        displacement_tol: None,
        oracle: Some(cert.point.clone()),
        oracle_tol: Some(1e-6),
        ..Default::default()
    };
    let t = run(&p, &r.plan.params(), v(&[0.0]), v(&[0.0]), &opts).unwrap();
    assert_eq!(t.stop, StopReason::OracleDistance);
    let d = t.last().dist2_x.unwrap() + t.last().dist2_y.unwrap();
    assert!(d.sqrt() <= 1e-6);
    assert_eq!(t.records[0].dist2_x, Some(0.25));
}

#[test]
fn schedule_closure_is_followed() {
    let p = scalar(0.0, 0.0);
    let sched = |k: usize| StepParams {
        tau: 1.0 + k as f64,
        ..unit(0.0, 0.0)
    };
    let opts = RunOptions {
        max_iter: 2,
        keep_iterates: true,
        ..Default::default()
    };
    let t = run(&p, &sched, v(&[6.0]), v(&[0.0]), &opts).unwrap();
    // x1 = 6 / 2, x2 = 3 / 3
    assert_relative_eq!(t.records[1].iterate.as_ref().unwrap().x[0], 3.0, epsilon = 1e-15);
    assert_relative_eq!(t.records[2].iterate.as_ref().unwrap().x[0], 1.0, epsilon = 1e-15);
    assert_eq!(t.records[2].params.unwrap().tau, 2.0);
}

proptest! {
    #[test]
    fn constant_sequence_average_is_constant(xi in 0.01..0.999f64, c in prop::array::uniform3(-1e3..1e3f64), k in 1usize..300) {
        let z = v(&c);
        let mut acc = ErgodicAccumulator::new(xi, z.clone(), z.clone()).unwrap();
        for _ in 0..k {
            acc.push(&z, &z);
        }
        prop_assert!((acc.x_hat() - &z).amax() <= 1e-12 * (1.0 + z.amax()));
    }

    #[test]
    fn weight_sum_rises_below_limit(xi in 0.01..0.999f64, k in 1usize..5000) {
        let z = v(&[0.0]);
        let mut acc = ErgodicAccumulator::new(xi, z.clone(), z.clone()).unwrap();
        let mut prev = acc.weight_sum();
        prop_assert_eq!(prev, 1.0);
        for _ in 0..k {
            acc.push(&z, &z);
            let s = acc.weight_sum();
            prop_assert!(s >= prev && s < 1.0 / (1.0 - xi));
            prev = s;
        }
        prop_assert_eq!(acc.count(), k + 1);
    }
}
