//! Reference saddle points: exact KKT solves for quadratic instances and subgradient
//! certificates for anything with an explicit subdifferential.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::{DenseCoupling, SaddleProblem};
use crate::prox::{ProxFunction, ProxSpec, QuadraticFunction};
use crate::solver::OraclePoint;

/// `g(x) = 1/2 x'Ax + a'x`, `h(y) = 1/2 y'By + b'y`, coupling `K` (`m x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSaddleInstance {
    pub a_mat: DMatrix<f64>,
    pub a: DVector<f64>,
    pub b_mat: DMatrix<f64>,
    pub b: DVector<f64>,
    pub k: DMatrix<f64>,
}

impl QuadraticSaddleInstance {
    pub fn new(
        a_mat: DMatrix<f64>,
        a: DVector<f64>,
        b_mat: DMatrix<f64>,
        b: DVector<f64>,
        k: DMatrix<f64>,
    ) -> Result<Self> {
        let (m, n) = k.shape();
        check_dim("A rows", n, a_mat.nrows())?;
        check_dim("A columns", n, a_mat.ncols())?;
        check_dim("a", n, a.len())?;
        check_dim("B rows", m, b_mat.nrows())?;
        check_dim("B columns", m, b_mat.ncols())?;
        check_dim("b", m, b.len())?;
        Ok(Self {
            a_mat,
            a,
            b_mat,
            b,
            k,
        })
    }

    /// Recovers quadratic data from a problem whose `g` and `h` are both quadratic
    /// (`quadratic` or `shifted_sq`). `None` otherwise.
    pub fn from_problem(p: &SaddleProblem) -> Option<Self> {
        fn quad(f: &dyn ProxFunction) -> Option<(DMatrix<f64>, DVector<f64>)> {
            match f.spec()? {
                ProxSpec::Quadratic { dim, matrix, linear } => Some((
                    DMatrix::from_row_slice(dim, dim, &matrix),
                    DVector::from_vec(linear),
                )),
                ProxSpec::ShiftedSq { mu, center } => {
                    let n = center.len();
                    Some((
                        DMatrix::identity(n, n) * mu,
                        DVector::from_vec(center) * -mu,
                    ))
                }
                _ => None,
            }
        }
        let (a_mat, a) = quad(p.g())?;
        let (b_mat, b) = quad(p.h())?;
        Self::new(a_mat, a, b_mat, b, p.coupling().to_dense()).ok()
    }

    pub fn n(&self) -> usize {
        self.k.ncols()
    }

    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn to_problem(&self) -> Result<SaddleProblem> {
        let g = QuadraticFunction::new(self.a_mat.clone(), self.a.clone())?;
        let h = QuadraticFunction::new(self.b_mat.clone(), self.b.clone())?;
        SaddleProblem::new(
            Arc::new(DenseCoupling::new(self.k.clone())?),
            Arc::new(g),
            Arc::new(h),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddlePointCertificate {
    pub point: OraclePoint,
    pub f_star: f64,
    /// `dist(-K'y*, dg(x*))`
    pub primal_residual: f64,
    /// `dist(Kx*, dh(y*))`
    pub dual_residual: f64,
}

/// Solves `[[A, K'], [-K, B]] [x; y] = [-a; -b]` by LU.
pub fn solve_quadratic_saddle(inst: &QuadraticSaddleInstance) -> Result<SaddlePointCertificate> {
    let (n, m) = (inst.n(), inst.m());
    let mut sys = DMatrix::zeros(n + m, n + m);
    sys.view_mut((0, 0), (n, n)).copy_from(&inst.a_mat);
    sys.view_mut((0, n), (n, m)).copy_from(&inst.k.transpose());
    sys.view_mut((n, 0), (m, n)).copy_from(&(-&inst.k));
    sys.view_mut((n, n), (m, m)).copy_from(&inst.b_mat);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&inst.a));
    rhs.rows_mut(n, m).copy_from(&(-&inst.b));

    let sol = sys.clone().lu().solve(&rhs).ok_or(Error::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let x = sol.rows(0, n).into_owned();
    let y = sol.rows(n, m).into_owned();
    let primal_residual = (&inst.a_mat * &x + &inst.a + inst.k.tr_mul(&y)).norm();
    let dual_residual = (&inst.k * &x - &inst.b_mat * &y - &inst.b).norm();
    let f_star = (&inst.k * &x).dot(&y) + 0.5 * x.dot(&(&inst.a_mat * &x)) + inst.a.dot(&x)
        - 0.5 * y.dot(&(&inst.b_mat * &y))
        - inst.b.dot(&y);
    Ok(SaddlePointCertificate {
        point: OraclePoint { x, y },
        f_star,
        primal_residual,
        dual_residual,
    })
}

/// Accepts `(x, y)` as a saddle point when `-K'y in dg(x)` and `Kx in dh(y)` hold to `tol`.
pub fn certify_saddle(
    p: &SaddleProblem,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
) -> Result<SaddlePointCertificate> {
    check_dim("x", p.n(), x.len())?;
    check_dim("y", p.m(), y.len())?;
    let k = p.coupling();
    let primal_residual = p
        .g()
        .subgradient_distance(x, &(-k.apply_adjoint(y)))
        .ok_or_else(|| Error::UnsupportedSubdifferential(p.g().kind().to_string()))?;
    let dual_residual = p
        .h()
        .subgradient_distance(y, &k.apply(x))
        .ok_or_else(|| Error::UnsupportedSubdifferential(p.h().kind().to_string()))?;
    if !(primal_residual <= tol && dual_residual <= tol) {
        return Err(Error::CertificateRejected {
            primal: primal_residual,
            dual: dual_residual,
        });
    }
    let f_star = p
        .objective(x, y)?
        .finite()
        .ok_or_else(|| Error::MissingData("finite objective at the certified point".into()))?;
    Ok(SaddlePointCertificate {
        point: OraclePoint {
            x: x.clone(),
            y: y.clone(),
        },
        f_star,
        primal_residual,
        dual_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub nu: f64,
    pub norm_k: f64,
    pub seed: u64,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn spd_with_floor(rng: &mut ChaCha8Rng, dim: usize, floor: f64) -> DMatrix<f64> {
    let r = gaussian(rng, dim, dim) / (dim.max(1) as f64).sqrt();
    let m = DMatrix::identity(dim, dim) * floor + r.tr_mul(&r);
    (&m + m.transpose()) * 0.5
}

/// Random quadratic instance with `A = mu I + R'R`, `B = nu I + S'S` and `K` rescaled to have
/// spectral norm `norm_k`. Deterministic in `seed`.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<(SaddleProblem, QuadraticSaddleInstance)> {
    let GeneratorSpec {
        n,
        m,
        mu,
        nu,
        norm_k,
        seed,
    } = *spec;
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    for (name, v) in [("mu", mu), ("nu", nu)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if !(norm_k.is_finite() && norm_k >= 0.0) {
        return Err(Error::InvalidParameter(format!("norm_k must be >= 0, got {norm_k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_mat = spd_with_floor(&mut rng, n, mu);
    let a = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b_mat = spd_with_floor(&mut rng, m, nu);
    let b = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let raw = gaussian(&mut rng, m, n);
    let k = if norm_k == 0.0 {
        DMatrix::zeros(m, n)
    } else {
        let s = raw.singular_values().max();
        if !(s > 0.0) {
            return Err(Error::Singular);
        }
        raw * (norm_k / s)
    };
    let inst = QuadraticSaddleInstance::new(a_mat, a, b_mat, b, k)?;
    let problem = inst.to_problem()?;
    Ok((problem, inst))
}

/// Standard normal start point `(x0, y0)`, drawn from a stream of `seed` separate from the one
/// [`generate_instance`] uses.
pub fn random_start(n: usize, m: usize, seed: u64) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    (x, y)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}
