//! Saddle-point problem `f(x, y) = <Kx, y> + g(x) - h(y)`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::prox::{ProxFunction, ProxSpec};

pub const PROBLEM_FORMAT_VERSION: u32 = 1;

/// Relative safety factor applied on top of the power-iteration estimate.
pub const NORM_SAFETY: f64 = 1e-6;
const NORM_TOL: f64 = 1e-10;
const NORM_MAX_ITER: usize = 20_000;
const NORM_SEED: u64 = 0x6b5f_2f1e_90c3_77d1;

/// Linear map `K: R^n -> R^m` with its adjoint and an upper bound on its operator norm.
pub trait LinearCoupling: Debug + Send + Sync {
    /// `m`
    fn rows(&self) -> usize;
    /// `n`
    fn cols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64>;
    fn norm_bound(&self) -> f64;
    fn to_dense(&self) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// Power-iteration estimate of the largest singular value.
    pub estimate: f64,
    /// `estimate * (1 + NORM_SAFETY)`.
    pub bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `k` by power iteration on `K'K` from a fixed seeded start.
pub fn estimate_operator_norm(k: &DMatrix<f64>) -> NormEstimate {
    let n = k.ncols();
    let zero = NormEstimate {
        estimate: 0.0,
        bound: 0.0,
        iterations: 0,
        converged: true,
    };
    if n == 0 || k.nrows() == 0 || k.amax() == 0.0 {
        return zero;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(NORM_SEED);
    let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    v /= v.norm();
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=NORM_MAX_ITER {
        iterations = it;
        let kv = k * &v;
        let next = kv.norm_squared();
        let w = k.tr_mul(&kv);
        let wn = w.norm();
        if wn == 0.0 {
            // start vector fell in the null space; lambda stays at what we have
            converged = true;
            break;
        }
        v = w / wn;
        let done = (next - lambda).abs() <= NORM_TOL * next;
        lambda = lambda.max(next);
        if done {
            converged = true;
            break;
        }
    }
    let estimate = lambda.sqrt();
    NormEstimate {
        estimate,
        bound: estimate * (1.0 + NORM_SAFETY),
        iterations,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct DenseCoupling {
    matrix: DMatrix<f64>,
    norm: NormEstimate,
}

impl DenseCoupling {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("coupling entries must be finite".into()));
        }
        let norm = estimate_operator_norm(&matrix);
        Ok(Self { matrix, norm })
    }

    /// Uses a caller-supplied norm bound instead of estimating one.
    pub fn with_norm_bound(matrix: DMatrix<f64>, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::InvalidParameter(format!("norm bound must be >= 0, got {bound}")));
        }
        let mut c = Self::new(matrix)?;
        c.norm.bound = bound;
        Ok(c)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn norm_estimate(&self) -> NormEstimate {
        self.norm
    }
}

impl LinearCoupling for DenseCoupling {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }
    fn cols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }
    fn norm_bound(&self) -> f64 {
        self.norm.bound
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// `K = [diag(d) 0]` or its transpose, padded with zeros to `m x n`.
#[derive(Debug, Clone)]
pub struct DiagonalCoupling {
    diag: DVector<f64>,
    rows: usize,
    cols: usize,
}

impl DiagonalCoupling {
    pub fn new(diag: DVector<f64>, rows: usize, cols: usize) -> Result<Self> {
        if diag.len() > rows.min(cols) {
            return Err(Error::DimensionMismatch {
                what: "diagonal length",
                expected: rows.min(cols),
                got: diag.len(),
            });
        }
        Ok(Self { diag, rows, cols })
    }
}

impl LinearCoupling for DiagonalCoupling {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        for (i, d) in self.diag.iter().enumerate() {
            out[i] = d * x[i];
        }
        out
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols);
        for (i, d) in self.diag.iter().enumerate() {
            out[i] = d * y[i];
        }
        out
    }
    fn norm_bound(&self) -> f64 {
        self.diag.amax()
    }
    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (i, d) in self.diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }
}

/// Value of `f` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ExtendedValue {
    Finite(f64),
    /// `x` outside the domain of `g`.
    PosInfinity,
    /// `y` outside the domain of `h`.
    NegInfinity,
    /// Both outside.
    Indeterminate,
}

impl ExtendedValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// `+inf`, `-inf` or `NaN` for the non-finite cases.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedValue::Finite(v) => v,
            ExtendedValue::PosInfinity => f64::INFINITY,
            ExtendedValue::NegInfinity => f64::NEG_INFINITY,
            ExtendedValue::Indeterminate => f64::NAN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaddleProblem {
    coupling: Arc<dyn LinearCoupling>,
    g: Arc<dyn ProxFunction>,
    h: Arc<dyn ProxFunction>,
    mu: f64,
    nu: f64,
}

impl SaddleProblem {
    /// Moduli are taken from `g` and `h`; both must be positive.
    pub fn new(
        coupling: Arc<dyn LinearCoupling>,
        g: Arc<dyn ProxFunction>,
        h: Arc<dyn ProxFunction>,
    ) -> Result<Self> {
        check_dim("g dimension (columns of K)", coupling.cols(), g.dim())?;
        check_dim("h dimension (rows of K)", coupling.rows(), h.dim())?;
        let (mu, nu) = (g.modulus(), h.modulus());
        for (name, v) in [("mu", mu), ("nu", nu)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            coupling,
            g,
            h,
            mu,
            nu,
        })
    }

    /// Declares smaller moduli than the functions provide.
    pub fn with_moduli(mut self, mu: f64, nu: f64) -> Result<Self> {
        let ok = |d: f64, actual: f64| d > 0.0 && d <= actual * (1.0 + 1e-12);
        if !ok(mu, self.g.modulus()) || !ok(nu, self.h.modulus()) {
            return Err(Error::InvalidParameter(format!(
                "declared moduli ({mu}, {nu}) must lie in (0, ({}, {})]",
                self.g.modulus(),
                self.h.modulus()
            )));
        }
        self.mu = mu;
        self.nu = nu;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.coupling.cols()
    }
    pub fn m(&self) -> usize {
        self.coupling.rows()
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn norm_k(&self) -> f64 {
        self.coupling.norm_bound()
    }
    pub fn coupling(&self) -> &dyn LinearCoupling {
        self.coupling.as_ref()
    }
    pub fn g(&self) -> &dyn ProxFunction {
        self.g.as_ref()
    }
    pub fn h(&self) -> &dyn ProxFunction {
        self.h.as_ref()
    }

    pub fn objective(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<ExtendedValue> {
        check_dim("x", self.n(), x.len())?;
        check_dim("y", self.m(), y.len())?;
        let gx = self.g.value(x);
        let hy = self.h.value(y);
        Ok(match (gx.is_finite(), hy.is_finite()) {
            (true, true) => ExtendedValue::Finite(self.coupling.apply(x).dot(y) + gx - hy),
            (false, true) => ExtendedValue::PosInfinity,
            (true, false) => ExtendedValue::NegInfinity,
            (false, false) => ExtendedValue::Indeterminate,
        })
    }

    pub fn to_document(&self) -> Result<ProblemDocument> {
        let spec = |f: &dyn ProxFunction| {
            f.spec()
                .ok_or_else(|| Error::UnsupportedSubdifferential(f.kind().to_string()))
        };
        let k = self.coupling.to_dense();
        Ok(ProblemDocument {
            version: PROBLEM_FORMAT_VERSION,
            n: self.n(),
            m: self.m(),
            k: k.transpose().as_slice().to_vec(),
            g: spec(self.g())?,
            h: spec(self.h())?,
            mu: Some(self.mu),
            nu: Some(self.nu),
            norm_k: Some(self.norm_k()),
        })
    }
}

/// JSON form of a problem: dense row-major `K` plus catalog descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub version: u32,
    pub n: usize,
    pub m: usize,
    /// `m x n`, row-major.
    pub k: Vec<f64>,
    pub g: ProxSpec,
    pub h: ProxSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Upper bound on the operator norm; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_k: Option<f64>,
}

impl ProblemDocument {
    pub fn build(&self) -> Result<SaddleProblem> {
        if self.version != PROBLEM_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported problem version {} (expected {PROBLEM_FORMAT_VERSION})",
                self.version
            )));
        }
        check_dim("K entries", self.n * self.m, self.k.len())?;
        let k = DMatrix::from_row_slice(self.m, self.n, &self.k);
        let estimated = DenseCoupling::new(k.clone())?;
        let coupling = match self.norm_k {
            Some(b) if b < estimated.norm_estimate().estimate * (1.0 - 1e-9) => {
                return Err(Error::InvalidParameter(format!(
                    "declared norm_k {b} is below the estimated norm {}",
                    estimated.norm_estimate().estimate
                )))
            }
            Some(b) => DenseCoupling::with_norm_bound(k, b)?,
            None => estimated,
        };
        let g: Arc<dyn ProxFunction> = Arc::from(self.g.build()?);
        let h: Arc<dyn ProxFunction> = Arc::from(self.h.build()?);
        let p = SaddleProblem::new(Arc::new(coupling), g, h)?;
        let (mu, nu) = (self.mu.unwrap_or(p.mu()), self.nu.unwrap_or(p.nu()));
        p.with_moduli(mu, nu)
    }
}
