//! Proximable strongly convex functions and their closed-form proximal maps.

use std::fmt::Debug;
use std::sync::Mutex;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_step, Error, Result};

/// A closed proper strongly convex function with a computable proximal map.
///
/// `prox(tau, v)` returns `argmin_u phi(u) + |u - v|^2 / (2 tau)`.
pub trait ProxFunction: Debug + Send + Sync {
    fn kind(&self) -> &'static str;
    fn dim(&self) -> usize;
    /// Strong convexity modulus.
    fn modulus(&self) -> f64;
    /// Function value; `+inf` outside the domain.
    fn value(&self, x: &DVector<f64>) -> f64;
    fn prox(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>>;
    /// Euclidean distance from `w` to the subdifferential at `x`, `+inf` when `x` is outside the
    /// domain. `None` if the function does not expose its subdifferential.
    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<f64>;
    /// Serializable descriptor, if the function belongs to the built-in catalog.
    fn spec(&self) -> Option<ProxSpec>;
}

fn check_prox_args(dim: usize, tau: f64, v: &DVector<f64>) -> Result<()> {
    check_step("tau", tau)?;
    check_dim("prox argument", dim, v.len())
}

/// `mu/2 |x - c|^2`.
#[derive(Debug, Clone)]
pub struct ShiftedSquare {
    mu: f64,
    center: DVector<f64>,
}

impl ShiftedSquare {
    pub fn new(mu: f64, center: DVector<f64>) -> Result<Self> {
        check_step("mu", mu)?;
        Ok(Self { mu, center })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

impl ProxFunction for ShiftedSquare {
    fn kind(&self) -> &'static str {
        "shifted_sq"
    }
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn modulus(&self) -> f64 {
        self.mu
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.mu * (x - &self.center).norm_squared()
    }
    fn prox(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_prox_args(self.dim(), tau, v)?;
        let tm = tau * self.mu;
        Ok((v + &self.center * tm) / (1.0 + tm))
    }
    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
        Some((w - (x - &self.center) * self.mu).norm())
    }
    fn spec(&self) -> Option<ProxSpec> {
        Some(ProxSpec::ShiftedSq {
            mu: self.mu,
            center: self.center.as_slice().to_vec(),
        })
    }
}

/// `1/2 x'Ax + a'x` with `A` symmetric positive definite.
#[derive(Debug)]
pub struct QuadraticFunction {
    matrix: DMatrix<f64>,
    linear: DVector<f64>,
    modulus: f64,
    factor_cache: Mutex<Option<(f64, Cholesky<f64, Dyn>)>>,
}

impl Clone for QuadraticFunction {
    fn clone(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            linear: self.linear.clone(),
            modulus: self.modulus,
            factor_cache: Mutex::new(None),
        }
    }
}

impl QuadraticFunction {
    /// Fails unless `matrix` is square, symmetric (to 1e-12 relative) and positive definite.
    pub fn new(matrix: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        let n = matrix.nrows();
        check_dim("quadratic matrix columns", n, matrix.ncols())?;
        check_dim("quadratic linear term", n, linear.len())?;
        if matrix.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("quadratic data must be finite".into()));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let modulus = if n == 0 {
            f64::INFINITY
        } else {
            SymmetricEigen::new(sym.clone()).eigenvalues.min()
        };
        if !(modulus > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            matrix: sym,
            linear,
            modulus,
            factor_cache: Mutex::new(None),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.linear
    }
}

impl ProxFunction for QuadraticFunction {
    fn kind(&self) -> &'static str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn modulus(&self) -> f64 {
        self.modulus
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.matrix * x)) + self.linear.dot(x)
    }
    fn prox(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_prox_args(self.dim(), tau, v)?;
        let rhs = v - &self.linear * tau;
        let mut cache = self.factor_cache.lock().unwrap_or_else(|e| e.into_inner());
        if cache.as_ref().map(|(t, _)| *t) != Some(tau) {
            let n = self.dim();
            let m = DMatrix::identity(n, n) + &self.matrix * tau;
            let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
            *cache = Some((tau, chol));
        }
        let (_, chol) = cache.as_ref().expect("factor cached above");
        Ok(chol.solve(&rhs))
    }
    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
        Some((w - self.gradient(x)).norm())
    }
    fn spec(&self) -> Option<ProxSpec> {
        Some(ProxSpec::Quadratic {
            dim: self.dim(),
            matrix: self.matrix.transpose().as_slice().to_vec(),
            linear: self.linear.as_slice().to_vec(),
        })
    }
}

/// `l1 |x|_1 + mu/2 |x|^2`.
#[derive(Debug, Clone)]
pub struct ElasticNet {
    dim: usize,
    l1: f64,
    mu: f64,
}

impl ElasticNet {
    pub fn new(dim: usize, l1: f64, mu: f64) -> Result<Self> {
        if !(l1.is_finite() && l1 >= 0.0) {
            return Err(Error::InvalidParameter(format!("l1 weight must be >= 0, got {l1}")));
        }
        check_step("mu", mu)?;
        Ok(Self { dim, l1, mu })
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }
}

impl ProxFunction for ElasticNet {
    fn kind(&self) -> &'static str {
        "elastic_net"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn modulus(&self) -> f64 {
        self.mu
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.l1 * x.lp_norm(1) + 0.5 * self.mu * x.norm_squared()
    }
    fn prox(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_prox_args(self.dim, tau, v)?;
        let t = tau * self.l1;
        let d = 1.0 + tau * self.mu;
        Ok(v.map(|vi| vi.signum() * (vi.abs() - t).max(0.0) / d))
    }
    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
        let d2: f64 = x
            .iter()
            .zip(w.iter())
            .map(|(&xi, &wi)| {
                let r = wi - self.mu * xi;
                let e = if xi == 0.0 {
                    (r.abs() - self.l1).max(0.0)
                } else {
                    r - self.l1 * xi.signum()
                };
                e * e
            })
            .sum();
        Some(d2.sqrt())
    }
    fn spec(&self) -> Option<ProxSpec> {
        Some(ProxSpec::ElasticNet {
            dim: self.dim,
            l1: self.l1,
            mu: self.mu,
        })
    }
}

/// `mu/2 |x|^2` restricted to the box `[lower, upper]`.
#[derive(Debug, Clone)]
pub struct BoxQuadratic {
    mu: f64,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxQuadratic {
    pub fn new(mu: f64, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_step("mu", mu)?;
        check_dim("box upper bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || l.is_nan()) {
            return Err(Error::InvalidParameter("box needs lower <= upper".into()));
        }
        Ok(Self { mu, lower, upper })
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.lower.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(xi, (l, u))| l <= xi && xi <= u)
    }
}

impl ProxFunction for BoxQuadratic {
    fn kind(&self) -> &'static str {
        "box_quadratic"
    }
    fn dim(&self) -> usize {
        self.lower.len()
    }
    fn modulus(&self) -> f64 {
        self.mu
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        if self.contains(x) {
            0.5 * self.mu * x.norm_squared()
        } else {
            f64::INFINITY
        }
    }
    fn prox(&self, tau: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_prox_args(self.dim(), tau, v)?;
        let d = 1.0 + tau * self.mu;
        Ok(DVector::from_fn(v.len(), |i, _| {
            (v[i] / d).clamp(self.lower[i], self.upper[i])
        }))
    }
    fn subgradient_distance(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
        if !self.contains(x) {
            return Some(f64::INFINITY);
        }
        let mut d2 = 0.0;
        for i in 0..x.len() {
            let r = w[i] - self.mu * x[i];
            let (l, u) = (self.lower[i], self.upper[i]);
            // normal cone: (-inf, 0] at an active lower bound, [0, inf) at an active upper bound
            let e = if l == u {
                0.0
            } else if x[i] == l {
                r.max(0.0)
            } else if x[i] == u {
                (-r).max(0.0)
            } else {
                r
            };
            d2 += e * e;
        }
        Some(d2.sqrt())
    }
    fn spec(&self) -> Option<ProxSpec> {
        Some(ProxSpec::BoxQuadratic {
            mu: self.mu,
            lower: self.lower.as_slice().to_vec(),
            upper: self.upper.as_slice().to_vec(),
        })
    }
}

/// Serializable descriptor of a catalog function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProxSpec {
    /// `matrix` is row-major, `dim x dim`.
    Quadratic {
        dim: usize,
        matrix: Vec<f64>,
        linear: Vec<f64>,
    },
    ShiftedSq {
        mu: f64,
        center: Vec<f64>,
    },
    ElasticNet {
        dim: usize,
        l1: f64,
        mu: f64,
    },
    BoxQuadratic {
        mu: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl ProxSpec {
    pub fn build(&self) -> Result<Box<dyn ProxFunction>> {
        Ok(match self {
            ProxSpec::Quadratic { dim, matrix, linear } => {
                check_dim("quadratic matrix entries", dim * dim, matrix.len())?;
                let m = DMatrix::from_row_slice(*dim, *dim, matrix);
                Box::new(QuadraticFunction::new(m, DVector::from_column_slice(linear))?)
            }
            ProxSpec::ShiftedSq { mu, center } => {
                Box::new(ShiftedSquare::new(*mu, DVector::from_column_slice(center))?)
            }
            ProxSpec::ElasticNet { dim, l1, mu } => Box::new(ElasticNet::new(*dim, *l1, *mu)?),
            ProxSpec::BoxQuadratic { mu, lower, upper } => Box::new(BoxQuadratic::new(
                *mu,
                DVector::from_column_slice(lower),
                DVector::from_column_slice(upper),
            )?),
        })
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Scalar proximal map by golden-section search, independent of any closed form.
///
/// Minimizes `phi(u) + (u - v)^2 / (2 tau)` down to a bracket of width `1e-10`.
/// `phi_diff(p, q)` must return `phi(p) - phi(q)` (`+inf` when `p` is outside the domain);
/// comparing differences instead of values keeps the search accurate well below
/// `sqrt(f64::EPSILON)`.
///
/// Without an explicit bracket, `[v - 10 tau (|phi'_+(v)| + 1), v + 10 tau (|phi'_-(v)| + 1)]` is
/// used, with one-sided slopes from finite differences, and `[-1e3, 1e3]` when a slope is not finite.
pub fn golden_section_prox(
    phi_diff: impl Fn(f64, f64) -> f64,
    tau: f64,
    v: f64,
    bracket: Option<(f64, f64)>,
) -> Result<f64> {
    check_step("tau", tau)?;
    if !v.is_finite() {
        return Err(Error::InvalidParameter("prox argument must be finite".into()));
    }
    let (lo, hi) = match bracket {
        Some((a, b)) if a <= b && a.is_finite() && b.is_finite() => (a, b),
        Some((a, b)) => return Err(Error::BracketMissesMinimizer { lo: a, hi: b }),
        None => {
            let h = 1e-6 * v.abs().max(1.0);
            let right = phi_diff(v + h, v) / h;
            let left = phi_diff(v, v - h) / h;
            if right.is_finite() && left.is_finite() {
                (v - 10.0 * tau * (right.abs() + 1.0), v + 10.0 * tau * (left.abs() + 1.0))
            } else {
                (-1e3, 1e3)
            }
        }
    };
    let diff = |p: f64, q: f64| phi_diff(p, q) + (p - q) * (p + q - 2.0 * v) / (2.0 * tau);

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    while b - a > 1e-10 {
        if diff(c, d) < 0.0 {
            b = d;
            d = c;
            c = b - INV_PHI * (b - a);
        } else {
            a = c;
            c = d;
            d = a + INV_PHI * (b - a);
        }
    }
    let u = 0.5 * (a + b);

    // A minimizer pinned to an endpoint with descent just outside means the bracket was wrong.
    let w = hi - lo;
    let probe = 1e-6 * w.max(1e-3);
    if u - lo < 1e-8 * w.max(1.0) && diff(lo - probe, lo) < 0.0 {
        return Err(Error::BracketMissesMinimizer { lo, hi });
    }
    if hi - u < 1e-8 * w.max(1.0) && diff(hi + probe, hi) < 0.0 {
        return Err(Error::BracketMissesMinimizer { lo, hi });
    }
    Ok(u)
}
