//! Step-size planning and certificate validation.
//!
//! A plan fixes `tau, sigma, alpha, beta` and the linear rate `xi`; an [`EtaCertificate`] holds the
//! auxiliary constants that show the rate hypotheses hold. Iterate plans use the `2 mu, 2 nu`
//! forms of the hypotheses (`zeta = 2`), value plans the `mu, nu` forms (`zeta = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::StepParams;

/// Relative margin a strict inequality must clear.
pub const STRICT_MARGIN: f64 = 1e-9;
/// Relative roundoff allowance on non-strict inequalities.
pub const NONSTRICT_ALLOWANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateMode {
    #[serde(rename = "iterate-k")]
    IterateK,
    #[serde(rename = "iterate-k2")]
    IterateKSquared,
    #[serde(rename = "value-k")]
    ValueK,
    #[serde(rename = "value-k2")]
    ValueKSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Cross terms bounded with `|K|`.
    K,
    /// Cross terms bounded with `|K|^2`.
    KSquared,
}

impl RateMode {
    pub const ALL: [RateMode; 4] = [
        RateMode::IterateK,
        RateMode::IterateKSquared,
        RateMode::ValueK,
        RateMode::ValueKSquared,
    ];

    pub fn zeta(self) -> f64 {
        match self {
            RateMode::IterateK | RateMode::IterateKSquared => 2.0,
            RateMode::ValueK | RateMode::ValueKSquared => 1.0,
        }
    }

    pub fn family(self) -> Family {
        match self {
            RateMode::IterateK | RateMode::ValueK => Family::K,
            RateMode::IterateKSquared | RateMode::ValueKSquared => Family::KSquared,
        }
    }

    pub fn is_value(self) -> bool {
        self.zeta() == 1.0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RateMode::IterateK => "iterate-k",
            RateMode::IterateKSquared => "iterate-k2",
            RateMode::ValueK => "value-k",
            RateMode::ValueKSquared => "value-k2",
        }
    }
}

impl std::str::FromStr for RateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RateMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown mode `{s}` (expected iterate-k, iterate-k2, value-k or value-k2)"
                ))
            })
    }
}

impl std::fmt::Display for RateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub tau: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub mode: RateMode,
}

impl StepPlan {
    pub fn params(&self) -> StepParams {
        StepParams {
            tau: self.tau,
            sigma: self.sigma,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaCertificate {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
}

/// Signed slack of one inequality; positive means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub id: String,
    pub slack: f64,
    pub strict: bool,
    pub pass: bool,
}

impl Margin {
    /// Margin for `small < big` (strict) or `small <= big`.
    pub fn new(id: &str, small: f64, big: f64, strict: bool) -> Self {
        let slack = big - small;
        let scale = small.abs().max(big.abs());
        let pass = if strict {
            slack > STRICT_MARGIN * scale
        } else {
            slack >= -NONSTRICT_ALLOWANCE * scale
        } && slack.is_finite();
        Self {
            id: id.to_string(),
            slack,
            strict,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub plan: StepPlan,
    pub certificate: EtaCertificate,
    pub margins: Vec<Margin>,
    /// Step-size halvings applied on top of the initial scale.
    pub halvings: usize,
    pub mu: f64,
    pub nu: f64,
    pub norm_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerOptions {
    /// Starting `c` in `tau = sigma = c min(1/mu, 1/nu, 1/|K|)`.
    pub initial_scale: f64,
    pub max_halvings: usize,
    /// Plan without dual extrapolation.
    pub zero_beta: bool,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            initial_scale: 1.0,
            max_halvings: 40,
            zero_beta: false,
        }
    }
}

fn l_pow(norm_k: f64, family: Family) -> f64 {
    match family {
        Family::K => norm_k,
        Family::KSquared => norm_k * norm_k,
    }
}

/// The two step-size thresholds `|K|^2 < (zeta mu + 1/tau)/sigma` and
/// `|K|^2 < (zeta nu + 1/sigma)/tau`.
pub fn threshold_margins(mu: f64, nu: f64, norm_k: f64, tau: f64, sigma: f64, zeta: f64) -> [Margin; 2] {
    let l2 = norm_k * norm_k;
    [
        Margin::new("threshold_primal", l2, (zeta * mu + 1.0 / tau) / sigma, true),
        Margin::new("threshold_dual", l2, (zeta * nu + 1.0 / sigma) / tau, true),
    ]
}

/// Every hypothesis of the selected rate statement, with constant parameters and a free `xi`.
pub fn validate_plan(mu: f64, nu: f64, norm_k: f64, plan: &StepPlan, cert: &EtaCertificate) -> Vec<Margin> {
    let StepPlan {
        tau,
        sigma,
        alpha,
        beta,
        xi,
        mode,
    } = *plan;
    let EtaCertificate {
        eta1,
        eta2,
        eta3,
        eta4,
    } = *cert;
    let zeta = mode.zeta();
    let family = mode.family();
    let l = norm_k;
    let l2 = l * l;
    let li = l_pow(l, family);

    let mut out = Vec::with_capacity(16);
    out.extend(threshold_margins(mu, nu, l, tau, sigma, zeta));
    out.push(Margin::new("xi_positive", 0.0, xi, true));
    out.push(Margin::new("xi_below_one", xi, 1.0, true));
    out.push(Margin::new("alpha_lower", 1.0 / (zeta * mu * tau + 1.0), alpha, true));
    out.push(Margin::new("alpha_dual_lower", 1.0 / (zeta * nu * sigma + 1.0), alpha, false));
    out.push(Margin::new(
        "beta_budget",
        sigma * l2 * beta * beta,
        (1.0 - alpha * tau * sigma * l2) * (zeta * mu + 1.0 / tau - 1.0 / (alpha * tau)),
        false,
    ));
    out.push(Margin::new(
        "eta_positive",
        0.0,
        eta1.min(eta2).min(eta3).min(eta4),
        true,
    ));
    out.push(Margin::new(
        "mu_condition",
        1.0 / (xi * tau) - 1.0 / tau + eta3 * li * beta * beta,
        zeta * mu,
        false,
    ));
    out.push(Margin::new(
        "nu_condition",
        1.0 / (xi * sigma) - 1.0 / sigma + eta2 * li * (xi - alpha).powi(2),
        zeta * nu,
        false,
    ));
    match family {
        Family::K => {
            out.push(Margin::new("eta_primal_aggregate", l * (eta1 * xi * xi + 1.0 / eta2), xi / tau, false));
            out.push(Margin::new("eta_dual_aggregate", l * (1.0 / eta1 + 1.0 / eta3), 1.0 / sigma, false));
        }
        Family::KSquared => {
            out.push(Margin::new(
                "eta_primal_aggregate",
                eta1 * l2 * xi + 1.0 / (eta2 * xi),
                1.0 / tau,
                false,
            ));
            out.push(Margin::new("eta_dual_aggregate", 1.0 / eta1 + 1.0 / eta3, 1.0 / sigma, false));
        }
    }
    out.push(Margin::new("step_product", xi * tau * sigma * l2, 1.0, true));
    out.push(Margin::new("eta4_lower", tau, eta4, false));
    out.push(Margin::new("eta4_dual", xi * eta4 * l2, 1.0 / sigma, true));
    out
}

/// A value strictly inside `(lo, hi)`: `1.1 lo` when that fits, the midpoint otherwise.
/// With `lo == 0` the `fallback` scale is used, capped at `hi / 2`.
fn pick(lo: f64, hi: f64, fallback: f64) -> Option<f64> {
    if !(lo >= 0.0) || !(hi > lo) {
        return None;
    }
    let v = if lo == 0.0 {
        if hi.is_finite() {
            fallback.min(0.5 * hi)
        } else {
            fallback
        }
    } else if 1.1 * lo < hi * (1.0 - STRICT_MARGIN) {
        1.1 * lo
    } else {
        0.5 * (lo + hi)
    };
    (v > lo * (1.0 + STRICT_MARGIN) && v < hi * (1.0 - STRICT_MARGIN) && v.is_finite()).then_some(v)
}

/// Chooses the auxiliary constants for fixed steps; `Err` names the link that broke.
#[allow(clippy::too_many_arguments)]
fn certify(
    norm_k: f64,
    tau: f64,
    sigma: f64,
    alpha: f64,
    beta: f64,
    zeta: f64,
    mu: f64,
    family: Family,
) -> std::result::Result<EtaCertificate, &'static str> {
    let l = norm_k;
    let l2 = l * l;
    let gap = zeta * mu + 1.0 / tau - 1.0 / (alpha * tau);
    let contraction = 1.0 - alpha * tau * sigma * l2;
    if !(gap > 0.0) {
        return Err("alpha_lower");
    }
    if !(contraction > 0.0) {
        return Err("step_product");
    }
    let eta4_hi = if l2 > 0.0 { 1.0 / (alpha * sigma * l2) } else { f64::INFINITY };
    let eta4 = if tau < eta4_hi * (1.0 - STRICT_MARGIN) {
        pick(tau, eta4_hi, tau).unwrap_or(tau)
    } else {
        return Err("eta4_dual");
    };

    let cross = |b: f64| l_pow(l, family) * b * b;
    let eta3_hi = if cross(beta) > 0.0 { gap / cross(beta) } else { f64::INFINITY };
    let (eta1, eta2, eta3) = match family {
        Family::K => {
            let eta3 = pick(sigma * l / contraction, eta3_hi, sigma).ok_or("eta3_window")?;
            let lo1 = if l > 0.0 { sigma * l * eta3 / (eta3 - sigma * l) } else { 0.0 };
            let hi1 = if l > 0.0 { 1.0 / (alpha * tau * l) } else { f64::INFINITY };
            let eta1 = pick(lo1, hi1, sigma).ok_or("eta1_window")?;
            let lo2 = tau * l / (alpha - tau * eta1 * l * alpha * alpha);
            let eta2 = pick(lo2, f64::INFINITY, tau).ok_or("eta2_window")?;
            (eta1, eta2, eta3)
        }
        Family::KSquared => {
            let eta3 = pick(sigma / contraction, eta3_hi, sigma).ok_or("eta3_window")?;
            let lo1 = sigma * eta3 / (eta3 - sigma);
            let hi1 = if l2 > 0.0 { 1.0 / (alpha * tau * l2) } else { f64::INFINITY };
            let eta1 = pick(lo1, hi1, sigma).ok_or("eta1_window")?;
            let lo2 = tau / (alpha * (1.0 - alpha * tau * eta1 * l2));
            let eta2 = pick(lo2, f64::INFINITY, tau).ok_or("eta2_window")?;
            (eta1, eta2, eta3)
        }
    };
    Ok(EtaCertificate {
        eta1,
        eta2,
        eta3,
        eta4,
    })
}

/// Plans constant parameters for the requested rate statement.
///
/// Starts from `tau = sigma = c min(1/mu, 1/nu, 1/|K|)` with `c = initial_scale` and halves until
/// every hypothesis holds. `alpha` is the midpoint of its admissible interval, `beta` sits at 90%
/// of its budget (or 0), and each `eta` is 10% above its lower threshold when that fits.
pub fn plan(mu: f64, nu: f64, norm_k: f64, mode: RateMode, opts: &PlannerOptions) -> Result<PlanReport> {
    for (name, v) in [("mu", mu), ("nu", nu)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(norm_k.is_finite() && norm_k >= 0.0) {
        return Err(Error::InvalidParameter(format!("norm_k must be >= 0, got {norm_k}")));
    }
    if !(opts.initial_scale.is_finite() && opts.initial_scale > 0.0) {
        return Err(Error::InvalidParameter("initial_scale must be positive".into()));
    }
    let zeta = mode.zeta();
    let family = mode.family();
    let l2 = norm_k * norm_k;
    let inv_l = if norm_k > 0.0 { 1.0 / norm_k } else { f64::INFINITY };
    let base = (1.0 / mu).min(1.0 / nu).min(inv_l);

    let mut last_failed = String::from("none");
    for halvings in 0..=opts.max_halvings {
        let step = opts.initial_scale * base * 0.5f64.powi(halvings as i32);
        let (tau, sigma) = (step, step);
        if let Some(m) = threshold_margins(mu, nu, norm_k, tau, sigma, zeta).iter().find(|m| !m.pass) {
            last_failed = m.id.clone();
            continue;
        }
        let lo = (1.0 / (zeta * mu * tau + 1.0)).max(1.0 / (zeta * nu * sigma + 1.0));
        let hi = if l2 > 0.0 { (1.0 / (tau * sigma * l2)).min(1.0) } else { 1.0 };
        let alpha = 0.5 * (lo + hi);
        if !(alpha > lo * (1.0 + STRICT_MARGIN) && alpha < hi * (1.0 - STRICT_MARGIN)) {
            last_failed = "alpha_lower".into();
            continue;
        }

        let budget = if l2 > 0.0 {
            (1.0 - alpha * tau * sigma * l2) * (zeta * mu + 1.0 / tau - 1.0 / (alpha * tau)) / (sigma * l2)
        } else {
            f64::INFINITY
        };
        let mut beta = if opts.zero_beta {
            0.0
        } else if budget.is_finite() {
            0.9 * budget.max(0.0).sqrt()
        } else {
            1.0
        };

        let mut found = None;
        for _ in 0..12 {
            match certify(norm_k, tau, sigma, alpha, beta, zeta, mu, family) {
                Ok(cert) => {
                    found = Some(cert);
                    break;
                }
                Err(id) => {
                    last_failed = id.to_string();
                    if beta == 0.0 {
                        break;
                    }
                    beta = if beta < 1e-3 { 0.0 } else { 0.5 * beta };
                }
            }
        }
        let Some(certificate) = found else { continue };

        let plan = StepPlan {
            tau,
            sigma,
            alpha,
            beta,
            xi: alpha,
            mode,
        };
        let margins = validate_plan(mu, nu, norm_k, &plan, &certificate);
        if let Some(m) = margins.iter().find(|m| !m.pass) {
            last_failed = m.id.clone();
            continue;
        }
        return Ok(PlanReport {
            plan,
            certificate,
            margins,
            halvings,
            mu,
            nu,
            norm_k,
        });
    }
    Err(Error::Infeasible {
        attempts: opts.max_halvings + 1,
        inequality: last_failed,
    })
}
