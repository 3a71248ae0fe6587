//! Solver for strongly convex-strongly concave saddle-point problems
//! `min_x max_y <Kx, y> + g(x) - h(y)` by alternating proximal steps with extrapolation.
//!
//! * [`prox`]: catalog of proximable functions.
//! * [`problem`]: problem assembly, couplings, operator-norm estimation.
//! * [`planner`]: constant step parameters with a checkable certificate.
//! * [`solver`]: the iteration, stopping rules, ergodic averaging.
//! * [`oracle`]: reference saddle points and random instances.
//! * [`diagnostics`]: per-iteration inequality checks and rate fitting.
//! * [`trace_io`]: CSV and JSON trace formats.
//!
//! ```
//! use saddleprox::diagnostics::check_iterate_bound;
//! use saddleprox::oracle::{generate_instance, solve_quadratic_saddle};
//! use saddleprox::{planner, GeneratorSpec, PlannerOptions, RateMode, RunOptions, Vector};
//!
//! # fn main() -> saddleprox::Result<()> {
//! let spec = GeneratorSpec { n: 20, m: 20, mu: 1.0, nu: 1.0, norm_k: 1.0, seed: 7 };
//! let (problem, instance) = generate_instance(&spec)?;
//! let star = solve_quadratic_saddle(&instance)?;
//!
//! let report = planner::plan(problem.mu(), problem.nu(), problem.norm_k(), RateMode::IterateK, &PlannerOptions::default())?;
//! let opts = RunOptions { max_iter: 500, oracle: Some(star.point.clone()), ..Default::default() };
//! let trace = saddleprox::solver::run(&problem, &report.plan.params(), Vector::zeros(20), Vector::zeros(20), &opts)?;
//!
//! let checks = check_iterate_bound(&trace, &report.plan, &report.certificate, problem.norm_k(), &star.point, 1e-9)?;
//! assert!(checks.iter().all(|c| c.pass));
//! # Ok(())
//! # }
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod oracle;
pub mod planner;
pub mod problem;
pub mod prox;
pub mod solver;
pub mod trace_io;

pub use nalgebra;

pub use diagnostics::{BoundCheck, CheckSummary, RateFit, Relation, ValueBoundReport};
pub use error::{Error, Result};
pub use oracle::{GeneratorSpec, QuadraticSaddleInstance, SaddlePointCertificate};
pub use planner::{EtaCertificate, Margin, PlanReport, PlannerOptions, RateMode, StepPlan};
pub use problem::{DenseCoupling, DiagonalCoupling, ExtendedValue, LinearCoupling, ProblemDocument, SaddleProblem};
pub use prox::{BoxQuadratic, ElasticNet, ProxFunction, ProxSpec, QuadraticFunction, ShiftedSquare};
pub use solver::{ErgodicAccumulator, IterateState, OraclePoint, RunOptions, Schedule, StepParams, StopReason, Trace};
pub use trace_io::{TraceDocument, TraceMeta, TraceTable};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
