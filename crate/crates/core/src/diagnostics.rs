//! Per-iteration checks of the convergence inequalities and empirical rate fitting.
//!
//! Every check compares two computed sides and passes when the signed slack is at least
//! `-tol * max(1, |lhs|, |rhs|)`.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::planner::{EtaCertificate, StepPlan};
use crate::problem::SaddleProblem;
use crate::solver::{IterateSnapshot, OraclePoint, StepParams, Trace, TraceRecord};

pub const DEFAULT_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub id: String,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    /// `rhs - lhs` for `<=`, `lhs - rhs` for `>=`.
    pub slack: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(id: &str, k: usize, lhs: f64, relation: Relation, rhs: f64, tol: f64) -> Self {
        let slack = match relation {
            Relation::Le => rhs - lhs,
            Relation::Ge => lhs - rhs,
        };
        let scale = 1f64.max(lhs.abs()).max(rhs.abs());
        Self {
            id: id.to_string(),
            k,
            lhs,
            rhs,
            relation,
            slack,
            pass: slack >= -tol * scale,
        }
    }

    /// Slack divided by `max(1, |lhs|, |rhs|)`.
    pub fn relative_slack(&self) -> f64 {
        self.slack / 1f64.max(self.lhs.abs()).max(self.rhs.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub id: String,
    pub count: usize,
    pub failures: usize,
    pub min_relative_slack: f64,
    pub worst_k: Option<usize>,
}

pub fn summarize(checks: &[BoundCheck]) -> Vec<CheckSummary> {
    let mut by_id: BTreeMap<&str, CheckSummary> = BTreeMap::new();
    for c in checks {
        let s = by_id.entry(c.id.as_str()).or_insert_with(|| CheckSummary {
            id: c.id.clone(),
            count: 0,
            failures: 0,
            min_relative_slack: f64::INFINITY,
            worst_k: None,
        });
        s.count += 1;
        if !c.pass {
            s.failures += 1;
        }
        let r = c.relative_slack();
        if r < s.min_relative_slack {
            s.min_relative_slack = r;
            s.worst_k = Some(c.k);
        }
    }
    by_id.into_values().collect()
}

fn record_dists(rec: &TraceRecord, oracle: &OraclePoint) -> Result<(f64, f64)> {
    match (rec.dist2_x, rec.dist2_y, &rec.iterate) {
        (Some(dx), Some(dy), _) => Ok((dx, dy)),
        (_, _, Some(it)) => Ok(((&it.x - &oracle.x).norm_squared(), (&it.y - &oracle.y).norm_squared())),
        _ => Err(Error::MissingData(format!(
            "record {} has neither distances nor iterates",
            rec.k
        ))),
    }
}

/// Iterate bound for constant parameters:
/// `xi^k ((1/tau)|x*-x0|^2 + (1/sigma)|y*-y0|^2) >= (1/tau)|x*-x^k|^2 + (1/sigma - xi eta4 |K|^2)|y*-y^k|^2`,
/// plus the per-block bounds it implies.
pub fn check_iterate_bound(
    trace: &Trace,
    plan: &StepPlan,
    cert: &EtaCertificate,
    norm_k: f64,
    oracle: &OraclePoint,
    tol: f64,
) -> Result<Vec<BoundCheck>> {
    check_dim("oracle x", trace.x0.len(), oracle.x.len())?;
    check_dim("oracle y", trace.y0.len(), oracle.y.len())?;
    let StepPlan { tau, sigma, xi, .. } = *plan;
    let bracket0 =
        (&oracle.x - &trace.x0).norm_squared() / tau + (&oracle.y - &trace.y0).norm_squared() / sigma;
    let dual_coef = 1.0 / sigma - xi * cert.eta4 * norm_k * norm_k;
    let mut out = Vec::with_capacity(3 * trace.records.len());
    for rec in &trace.records {
        let (dx, dy) = record_dists(rec, oracle)?;
        let budget = xi.powi(rec.k as i32) * bracket0;
        out.push(BoundCheck::new(
            "iterate_sum",
            rec.k,
            budget,
            Relation::Ge,
            dx / tau + dual_coef * dy,
            tol,
        ));
        out.push(BoundCheck::new("iterate_x", rec.k, dx, Relation::Le, tau * budget, tol));
        if dual_coef > 0.0 {
            out.push(BoundCheck::new("iterate_y", rec.k, dy, Relation::Le, budget / dual_coef, tol));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueBoundRow {
    pub k: usize,
    pub f_hat: f64,
    /// Upper bound on `f_hat - f*`.
    pub upper: f64,
    /// Lower bound on `f_hat - f*` (non-positive).
    pub lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueBoundReport {
    pub checks: Vec<BoundCheck>,
    pub rows: Vec<ValueBoundRow>,
    /// Largest bracket term seen, an empirical stand-in for the constant multiplying `xi^k`.
    pub empirical_m: f64,
}

/// Ergodic function-value bounds. Record `j` carries the average over `x^1 .. x^j`, whose bound
/// carries the factor `xi^{j-1}`.
pub fn check_value_bound(
    trace: &Trace,
    plan: &StepPlan,
    f_star: f64,
    oracle: &OraclePoint,
    tol: f64,
) -> Result<ValueBoundReport> {
    check_dim("oracle x", trace.x0.len(), oracle.x.len())?;
    check_dim("oracle y", trace.y0.len(), oracle.y.len())?;
    if !f_star.is_finite() {
        return Err(Error::MissingData("finite f*".into()));
    }
    let StepPlan { tau, sigma, xi, .. } = *plan;
    let dx0 = (&oracle.x - &trace.x0).norm_squared();
    let dy0 = (&oracle.y - &trace.y0).norm_squared();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut empirical_m: f64 = 0.0;
    for rec in trace.records.iter().filter(|r| r.k >= 1) {
        let e = rec
            .ergodic
            .as_ref()
            .ok_or_else(|| Error::MissingData(format!("ergodic average at record {}", rec.k)))?;
        let f_hat = e.f_hat.to_f64();
        let w = xi.powi(rec.k as i32 - 1);
        let up_bracket = dx0 / (2.0 * tau) + e.dist2_y_hat_y0 / (2.0 * sigma);
        let lo_bracket = e.dist2_x_hat_x0 / (2.0 * tau) + dy0 / (2.0 * sigma);
        empirical_m = empirical_m.max(up_bracket).max(lo_bracket);
        checks.push(BoundCheck::new("value_upper", rec.k, f_hat - f_star, Relation::Le, w * up_bracket, tol));
        checks.push(BoundCheck::new("value_lower", rec.k, f_star - f_hat, Relation::Le, w * lo_bracket, tol));
        rows.push(ValueBoundRow {
            k: rec.k,
            f_hat,
            upper: w * up_bracket,
            lower: -w * lo_bracket,
        });
    }
    Ok(ValueBoundReport {
        checks,
        rows,
        empirical_m,
    })
}

/// Scalars entering the one-step proximal inequalities at a test point `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximalStepTerms {
    pub tau: f64,
    pub sigma: f64,
    pub mu: f64,
    pub nu: f64,
    /// `<(x^k - x^{k+1})/tau - K' ybar^{k+1}, x - x^{k+1}>`
    pub primal_inner: f64,
    /// `<(y^k - y^{k+1})/sigma + K xbar^k, y - y^{k+1}>`
    pub dual_inner: f64,
    /// `|x - x^k|^2`, `|y - y^k|^2`
    pub d2_x_prev: f64,
    pub d2_y_prev: f64,
    /// `|x - x^{k+1}|^2`, `|y - y^{k+1}|^2`
    pub d2_x_next: f64,
    pub d2_y_next: f64,
    /// `|x^k - x^{k+1}|^2`, `|y^k - y^{k+1}|^2`
    pub step2_x: f64,
    pub step2_y: f64,
    /// `<K xbar^k, y - y^{k+1}> - <ybar^{k+1}, K(x - x^{k+1})>`
    pub coupling: f64,
    pub g_next: f64,
    pub g_at: f64,
    pub h_next: f64,
    pub h_at: f64,
}

impl ProximalStepTerms {
    /// `(lhs, rhs)` of `lhs <= rhs` for the primal prox step.
    pub fn primal_sides(&self) -> (f64, f64) {
        (
            self.primal_inner + 0.5 * self.mu * self.d2_x_next + self.g_next,
            self.g_at,
        )
    }

    /// `(lhs, rhs)` of `lhs <= rhs` for the dual prox step.
    pub fn dual_sides(&self) -> (f64, f64) {
        (
            self.dual_inner + 0.5 * self.nu * self.d2_y_next + self.h_next,
            self.h_at,
        )
    }

    /// `(lhs, rhs)` of `lhs >= rhs` for the combined one-step inequality.
    pub fn combined_sides(&self) -> (f64, f64) {
        let (t, s) = (self.tau, self.sigma);
        let lhs = self.d2_x_prev / (2.0 * t) + self.d2_y_prev / (2.0 * s);
        let rhs = (0.5 * self.mu + 0.5 / t) * self.d2_x_next
            + (0.5 * self.nu + 0.5 / s) * self.d2_y_next
            + self.step2_x / (2.0 * t)
            + self.step2_y / (2.0 * s)
            + self.coupling
            + self.g_next
            - self.h_at
            + self.h_next
            - self.g_at;
        (lhs, rhs)
    }

    pub fn from_step(
        p: &SaddleProblem,
        prm: &StepParams,
        prev: &IterateSnapshot,
        next: &IterateSnapshot,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Self {
        let k = p.coupling();
        let (tau, sigma) = (prm.tau, prm.sigma);
        let dx_next = x - &next.x;
        let dy_next = y - &next.y;
        let kt_ybar = k.apply_adjoint(&next.y_bar);
        let k_xbar = k.apply(&prev.x_bar);
        Self {
            tau,
            sigma,
            mu: p.mu(),
            nu: p.nu(),
            primal_inner: ((&prev.x - &next.x) / tau - &kt_ybar).dot(&dx_next),
            dual_inner: ((&prev.y - &next.y) / sigma + &k_xbar).dot(&dy_next),
            d2_x_prev: (x - &prev.x).norm_squared(),
            d2_y_prev: (y - &prev.y).norm_squared(),
            d2_x_next: dx_next.norm_squared(),
            d2_y_next: dy_next.norm_squared(),
            step2_x: (&prev.x - &next.x).norm_squared(),
            step2_y: (&prev.y - &next.y).norm_squared(),
            coupling: k_xbar.dot(&dy_next) - next.y_bar.dot(&k.apply(&dx_next)),
            g_next: p.g().value(&next.x),
            g_at: p.g().value(x),
            h_next: p.h().value(&next.y),
            h_at: p.h().value(y),
        }
    }
}

/// Scalars entering the one-step descent inequality at the saddle point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentTerms {
    pub tau: f64,
    pub sigma: f64,
    pub mu: f64,
    pub nu: f64,
    /// `|x* - x^k|^2`, `|y* - y^k|^2`
    pub d2_x_prev: f64,
    pub d2_y_prev: f64,
    /// `|x* - x^{k+1}|^2`, `|y* - y^{k+1}|^2`
    pub d2_x_next: f64,
    pub d2_y_next: f64,
    pub step2_x: f64,
    pub step2_y: f64,
    /// `<K(x^{k+1} - xbar^k), y^{k+1} - y*>`
    pub extrapolation_cross: f64,
    /// `<K(x^{k+1} - x*), y^{k+1} - ybar^{k+1}>`
    pub dual_cross: f64,
}

impl DescentTerms {
    /// `(lhs, rhs)` of `lhs >= rhs`.
    pub fn sides(&self) -> (f64, f64) {
        let (t, s) = (self.tau, self.sigma);
        let lhs = self.d2_x_prev / (2.0 * t) + self.d2_y_prev / (2.0 * s);
        let rhs = (self.mu + 0.5 / t) * self.d2_x_next
            + (self.nu + 0.5 / s) * self.d2_y_next
            + self.step2_x / (2.0 * t)
            + self.step2_y / (2.0 * s)
            + self.extrapolation_cross
            - self.dual_cross;
        (lhs, rhs)
    }

    pub fn from_step(
        p: &SaddleProblem,
        prm: &StepParams,
        prev: &IterateSnapshot,
        next: &IterateSnapshot,
        oracle: &OraclePoint,
    ) -> Self {
        let k = p.coupling();
        Self {
            tau: prm.tau,
            sigma: prm.sigma,
            mu: p.mu(),
            nu: p.nu(),
            d2_x_prev: (&oracle.x - &prev.x).norm_squared(),
            d2_y_prev: (&oracle.y - &prev.y).norm_squared(),
            d2_x_next: (&oracle.x - &next.x).norm_squared(),
            d2_y_next: (&oracle.y - &next.y).norm_squared(),
            step2_x: (&prev.x - &next.x).norm_squared(),
            step2_y: (&prev.y - &next.y).norm_squared(),
            extrapolation_cross: k.apply(&(&next.x - &prev.x_bar)).dot(&(&next.y - &oracle.y)),
            dual_cross: k.apply(&(&next.x - &oracle.x)).dot(&(&next.y - &next.y_bar)),
        }
    }
}

/// The three one-step proximal checks for precomputed terms.
pub fn proximal_checks(k: usize, t: &ProximalStepTerms, tol: f64) -> [BoundCheck; 3] {
    let (pl, pr) = t.primal_sides();
    let (dl, dr) = t.dual_sides();
    let (cl, cr) = t.combined_sides();
    [
        BoundCheck::new("prox_primal", k, pl, Relation::Le, pr, tol),
        BoundCheck::new("prox_dual", k, dl, Relation::Le, dr, tol),
        BoundCheck::new("prox_combined", k, cl, Relation::Ge, cr, tol),
    ]
}

/// The descent check for precomputed terms.
pub fn descent_check(k: usize, t: &DescentTerms, tol: f64) -> BoundCheck {
    let (l, r) = t.sides();
    BoundCheck::new("descent", k, l, Relation::Ge, r, tol)
}

fn steps(trace: &Trace) -> Result<Vec<(StepParams, &IterateSnapshot, &IterateSnapshot, usize)>> {
    trace
        .records
        .windows(2)
        .map(|w| {
            let missing = || Error::MissingData(format!("full iterates at records {} and {}", w[0].k, w[1].k));
            let prev = w[0].iterate.as_ref().ok_or_else(missing)?;
            let next = w[1].iterate.as_ref().ok_or_else(missing)?;
            let prm = w[1].params.ok_or_else(|| Error::MissingData(format!("step parameters at record {}", w[1].k)))?;
            Ok((prm, prev, next, w[0].k))
        })
        .collect()
}

/// One-step proximal inequalities (primal, dual, combined) at each test point and each step.
/// Test points outside the domain of `g` or `h` make the inequalities vacuous and are skipped.
pub fn check_proximal_inequalities(
    p: &SaddleProblem,
    trace: &Trace,
    points: &[(DVector<f64>, DVector<f64>)],
    tol: f64,
) -> Result<Vec<BoundCheck>> {
    for (x, y) in points {
        check_dim("test point x", p.n(), x.len())?;
        check_dim("test point y", p.m(), y.len())?;
    }
    let mut out = Vec::new();
    for (prm, prev, next, k) in steps(trace)? {
        for (x, y) in points {
            let t = ProximalStepTerms::from_step(p, &prm, prev, next, x, y);
            if !(t.g_at.is_finite() && t.h_at.is_finite()) {
                continue;
            }
            out.extend(proximal_checks(k, &t, tol));
        }
    }
    Ok(out)
}

/// One-step descent inequality at the saddle point for every step of the trace.
pub fn check_saddle_descent(
    p: &SaddleProblem,
    trace: &Trace,
    oracle: &OraclePoint,
    tol: f64,
) -> Result<Vec<BoundCheck>> {
    check_dim("oracle x", p.n(), oracle.x.len())?;
    check_dim("oracle y", p.m(), oracle.y.len())?;
    steps(trace)?
        .into_iter()
        .map(|(prm, prev, next, k)| Ok(descent_check(k, &DescentTerms::from_step(p, &prm, prev, next, oracle), tol)))
        .collect()
}

/// `f(x, y*) - f(x*, y) >= mu/2 |x - x*|^2 + nu/2 |y - y*|^2` at each test point.
pub fn check_gap_lower_bound(
    p: &SaddleProblem,
    oracle: &OraclePoint,
    points: &[(DVector<f64>, DVector<f64>)],
    tol: f64,
) -> Result<Vec<BoundCheck>> {
    let mut out = Vec::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let a = p.objective(x, &oracle.y)?.to_f64();
        let b = p.objective(&oracle.x, y)?.to_f64();
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        let rhs = 0.5 * p.mu() * (x - &oracle.x).norm_squared() + 0.5 * p.nu() * (y - &oracle.y).norm_squared();
        out.push(BoundCheck::new("gap_lower", i, a - b, Relation::Ge, rhs, tol));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `exp(slope)` of the least-squares line through `log d_k`.
    pub rate: f64,
    pub log_intercept: f64,
    /// RMS residual of the log-linear fit.
    pub residual_rms: f64,
    pub points: usize,
    /// First and one-past-last index actually used.
    pub start: usize,
    pub end: usize,
}

/// Default window: everything after the first 10% of the series.
pub fn default_window(len: usize) -> Range<usize> {
    len / 10..len
}

/// Log-linear least squares over `series[window]`. The window is cut at the first value that is
/// `<= floor` or non-finite, so numerical zeros do not bend the fit.
pub fn fit_rate(series: &[f64], window: Range<usize>, floor: f64) -> Result<RateFit> {
    let start = window.start.min(series.len());
    let end = window.end.min(series.len()).max(start);
    let cut = series[start..end]
        .iter()
        .position(|v| !(v.is_finite() && *v > floor))
        .map_or(end, |i| start + i);
    let n = cut - start;
    if n < 3 {
        return Err(Error::WindowTooShort(n));
    }
    let ks: Vec<f64> = (start..cut).map(|k| k as f64).collect();
    let ls: Vec<f64> = series[start..cut].iter().map(|v| v.ln()).collect();
    let nf = n as f64;
    let mk = ks.iter().sum::<f64>() / nf;
    let ml = ls.iter().sum::<f64>() / nf;
    let sxy: f64 = ks.iter().zip(&ls).map(|(k, l)| (k - mk) * (l - ml)).sum();
    let sxx: f64 = ks.iter().map(|k| (k - mk).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ml - slope * mk;
    let rss: f64 = ks
        .iter()
        .zip(&ls)
        .map(|(k, l)| (l - intercept - slope * k).powi(2))
        .sum();
    Ok(RateFit {
        rate: slope.exp(),
        log_intercept: intercept,
        residual_rms: (rss / nf).sqrt(),
        points: n,
        start,
        end: cut,
    })
}

/// Floor relative to the largest finite value of the series.
pub fn relative_floor(series: &[f64], rel: f64) -> f64 {
    rel * series.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max)
}
