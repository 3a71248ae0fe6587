//! Alternating proximal mapping iteration with extrapolation.
//!
//! One step maps `(x^k, y^k, xbar^k)` to
//!
//! ```text
//! y^{k+1}    = prox_{sigma h}(sigma K xbar^k + y^k)
//! ybar^{k+1} = y^{k+1} + beta (y^{k+1} - y^k)
//! x^{k+1}    = prox_{tau g}(-tau K' ybar^{k+1} + x^k)
//! xbar^{k+1} = x^{k+1} + alpha (x^{k+1} - x^k)
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_step, Error, Result};
use crate::problem::{ExtendedValue, SaddleProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub tau: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl StepParams {
    pub fn validate(&self) -> Result<()> {
        check_step("tau", self.tau)?;
        check_step("sigma", self.sigma)?;
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Parameters used at step `k` (producing iterate `k + 1`).
pub trait Schedule {
    fn params(&self, k: usize) -> StepParams;
}

impl Schedule for StepParams {
    fn params(&self, _k: usize) -> StepParams {
        *self
    }
}

impl<F: Fn(usize) -> StepParams> Schedule for F {
    fn params(&self, k: usize) -> StepParams {
        self(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub k: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub x_bar: DVector<f64>,
    /// `ybar^k`; equals `y^0` at `k = 0`.
    pub y_bar: DVector<f64>,
}

impl IterateState {
    /// `xbar^0 = x^0`, `ybar^0 = y^0`.
    pub fn initial(p: &SaddleProblem, x0: DVector<f64>, y0: DVector<f64>) -> Result<Self> {
        check_dim("x0", p.n(), x0.len())?;
        check_dim("y0", p.m(), y0.len())?;
        if x0.iter().chain(y0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("start point must be finite".into()));
        }
        Ok(Self {
            k: 0,
            x_bar: x0.clone(),
            y_bar: y0.clone(),
            x: x0,
            y: y0,
        })
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).chain(self.x_bar.iter()).all(|v| v.is_finite())
    }
}

pub fn step(p: &SaddleProblem, s: &IterateState, prm: &StepParams) -> Result<IterateState> {
    prm.validate()?;
    let k = p.coupling();
    let y = p.h().prox(prm.sigma, &(k.apply(&s.x_bar) * prm.sigma + &s.y))?;
    let y_bar = &y + (&y - &s.y) * prm.beta;
    let x = p.g().prox(prm.tau, &(&s.x - k.apply_adjoint(&y_bar) * prm.tau))?;
    let x_bar = &x + (&x - &s.x) * prm.alpha;
    let next = IterateState {
        k: s.k + 1,
        x,
        y,
        x_bar,
        y_bar,
    };
    if !next.is_finite() {
        return Err(Error::NonFiniteIterate { k: next.k });
    }
    Ok(next)
}

/// Weighted average `sum_i xi^{-i} z^{i+1} / sum_j xi^{-j}` kept by the stable recursion
/// `s' = xi s + 1`, `zhat' = (1 - 1/s') zhat + z / s'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAccumulator {
    xi: f64,
    weight_sum: f64,
    count: usize,
    x_hat: DVector<f64>,
    y_hat: DVector<f64>,
}

impl ErgodicAccumulator {
    /// Starts from `x^1, y^1` with `s = 1`.
    pub fn new(xi: f64, x1: DVector<f64>, y1: DVector<f64>) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidParameter(format!("xi must lie in (0, 1), got {xi}")));
        }
        Ok(Self {
            xi,
            weight_sum: 1.0,
            count: 1,
            x_hat: x1,
            y_hat: y1,
        })
    }

    pub fn push(&mut self, x: &DVector<f64>, y: &DVector<f64>) {
        // rounding would otherwise let s reach 1/(1 - xi) after a few dozen steps
        let cap = (1.0 / (1.0 - self.xi)).next_down();
        self.weight_sum = (self.xi * self.weight_sum + 1.0).min(cap).max(self.weight_sum);
        let w = 1.0 / self.weight_sum;
        self.x_hat.axpy(w, x, 1.0 - w);
        self.y_hat.axpy(w, y, 1.0 - w);
        self.count += 1;
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }
    /// Number of iterates averaged so far.
    pub fn count(&self) -> usize {
        self.count
    }
    pub fn x_hat(&self) -> &DVector<f64> {
        &self.x_hat
    }
    pub fn y_hat(&self) -> &DVector<f64> {
        &self.y_hat
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    #[serde(with = "crate::trace_io::dvec")]
    pub x: DVector<f64>,
    #[serde(with = "crate::trace_io::dvec")]
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iter: usize,
    /// Stop once `|z^{k+1} - z^k| <= tol` in the product norm.
    pub displacement_tol: Option<f64>,
    /// Reference saddle point for distance columns.
    pub oracle: Option<OraclePoint>,
    /// Stop once the distance to `oracle` is `<= tol`.
    pub oracle_tol: Option<f64>,
    /// Ratio for the weighted ergodic average; no averaging when `None`.
    pub ergodic_xi: Option<f64>,
    /// Store full iterates (and averages) in every record.
    pub keep_iterates: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            displacement_tol: Some(1e-12),
            oracle: None,
            oracle_tol: None,
            ergodic_xi: None,
            keep_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    Displacement,
    OracleDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSnapshot {
    #[serde(with = "crate::trace_io::dvec")]
    pub x: DVector<f64>,
    #[serde(with = "crate::trace_io::dvec")]
    pub y: DVector<f64>,
    #[serde(with = "crate::trace_io::dvec")]
    pub x_bar: DVector<f64>,
    #[serde(with = "crate::trace_io::dvec")]
    pub y_bar: DVector<f64>,
}

/// Weighted average over `x^1 .. x^k` at record `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSnapshot {
    pub weight_sum: f64,
    pub f_hat: ExtendedValue,
    /// `|xhat - x^0|^2`
    pub dist2_x_hat_x0: f64,
    /// `|yhat - y^0|^2`
    pub dist2_y_hat_y0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::trace_io::opt_dvec")]
    pub x_hat: Option<DVector<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::trace_io::opt_dvec")]
    pub y_hat: Option<DVector<f64>>,
}

/// State after `k` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// Parameters of the step that produced this record; `None` at `k = 0`.
    pub params: Option<StepParams>,
    pub dist2_x: Option<f64>,
    pub dist2_y: Option<f64>,
    pub displacement: Option<f64>,
    pub ergodic: Option<ErgodicSnapshot>,
    pub iterate: Option<IterateSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    #[serde(with = "crate::trace_io::dvec")]
    pub x0: DVector<f64>,
    #[serde(with = "crate::trace_io::dvec")]
    pub y0: DVector<f64>,
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }
}

fn snapshot(s: &IterateState) -> IterateSnapshot {
    IterateSnapshot {
        x: s.x.clone(),
        y: s.y.clone(),
        x_bar: s.x_bar.clone(),
        y_bar: s.y_bar.clone(),
    }
}

fn ergodic_snapshot(
    p: &SaddleProblem,
    acc: &ErgodicAccumulator,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    keep: bool,
) -> Result<ErgodicSnapshot> {
    Ok(ErgodicSnapshot {
        weight_sum: acc.weight_sum(),
        f_hat: p.objective(acc.x_hat(), acc.y_hat())?,
        dist2_x_hat_x0: (acc.x_hat() - x0).norm_squared(),
        dist2_y_hat_y0: (acc.y_hat() - y0).norm_squared(),
        x_hat: keep.then(|| acc.x_hat().clone()),
        y_hat: keep.then(|| acc.y_hat().clone()),
    })
}

pub fn run(
    p: &SaddleProblem,
    schedule: &dyn Schedule,
    x0: DVector<f64>,
    y0: DVector<f64>,
    opts: &RunOptions,
) -> Result<Trace> {
    let mut state = IterateState::initial(p, x0.clone(), y0.clone())?;
    if let Some(o) = &opts.oracle {
        check_dim("oracle x", p.n(), o.x.len())?;
        check_dim("oracle y", p.m(), o.y.len())?;
    }
    let dists = |s: &IterateState| match &opts.oracle {
        Some(o) => (
            Some((&s.x - &o.x).norm_squared()),
            Some((&s.y - &o.y).norm_squared()),
        ),
        None => (None, None),
    };
    let (dx, dy) = dists(&state);
    let mut records = vec![TraceRecord {
        k: 0,
        params: None,
        dist2_x: dx,
        dist2_y: dy,
        displacement: None,
        ergodic: None,
        iterate: opts.keep_iterates.then(|| snapshot(&state)),
    }];
    let mut acc: Option<ErgodicAccumulator> = None;
    let mut stop = StopReason::MaxIterations;

    for k in 0..opts.max_iter {
        let prm = schedule.params(k);
        let next = step(p, &state, &prm)?;
        let displacement =
            ((&next.x - &state.x).norm_squared() + (&next.y - &state.y).norm_squared()).sqrt();

        let ergodic = match opts.ergodic_xi {
            Some(xi) => {
                match acc.as_mut() {
                    Some(a) => a.push(&next.x, &next.y),
                    None => acc = Some(ErgodicAccumulator::new(xi, next.x.clone(), next.y.clone())?),
                }
                let a = acc.as_ref().expect("accumulator initialised above");
                Some(ergodic_snapshot(p, a, &x0, &y0, opts.keep_iterates)?)
            }
            None => None,
        };
        let (dx, dy) = dists(&next);
        records.push(TraceRecord {
            k: next.k,
            params: Some(prm),
            dist2_x: dx,
            dist2_y: dy,
            displacement: Some(displacement),
            ergodic,
            iterate: opts.keep_iterates.then(|| snapshot(&next)),
        });
        state = next;

        if let (Some(tol), Some(dx), Some(dy)) = (opts.oracle_tol, dx, dy) {
            if (dx + dy).sqrt() <= tol {
                stop = StopReason::OracleDistance;
                break;
            }
        }
        if let Some(tol) = opts.displacement_tol {
            if displacement <= tol {
                stop = StopReason::Displacement;
                break;
            }
        }
    }
    Ok(Trace {
        x0,
        y0,
        records,
        stop,
    })
}
