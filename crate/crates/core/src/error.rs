use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("linear system is singular")]
    Singular,

    #[error("bracket [{lo}, {hi}] does not contain the minimizer")]
    BracketMissesMinimizer { lo: f64, hi: f64 },

    #[error("no feasible plan after {attempts} attempts; last failed inequality: {inequality}")]
    Infeasible { attempts: usize, inequality: String },

    #[error("non-finite iterate produced at iteration {k}")]
    NonFiniteIterate { k: usize },

    #[error("saddle point rejected: primal residual {primal:e}, dual residual {dual:e}")]
    CertificateRejected { primal: f64, dual: f64 },

    #[error("function kind `{0}` does not expose its subdifferential")]
    UnsupportedSubdifferential(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("rate fit needs at least 3 usable points, got {0}")]
    WindowTooShort(usize),

    #[error("trace format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

pub(crate) fn check_step(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {value}")))
    }
}
