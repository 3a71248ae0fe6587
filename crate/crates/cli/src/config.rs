use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use saddleprox::planner::PlannerOptions;
use saddleprox::{ProblemDocument, RateMode};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Seeds every random draw (instance generator, random start).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub problem: ProblemSource,
    pub plan: PlanSource,
    #[serde(default)]
    pub start: StartPoint,
    pub max_iter: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    Generator(GeneratorConfig),
    Inline(ProblemDocument),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub mu: f64,
    pub nu: f64,
    pub norm_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanSource {
    Planner(PlannerConfig),
    Explicit(ExplicitPlan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub mode: RateMode,
    #[serde(default)]
    pub options: PlannerOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPlan {
    pub tau: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Ratio for the weighted ergodic average; no averaging when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StartPoint {
    #[default]
    Zeros,
    /// Standard normal entries drawn from the config seed.
    Random,
    Point { x0: Vec<f64>, y0: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Stop once successive iterates move less than this; `null` disables.
    pub displacement: Option<f64>,
    /// Relative tolerance of the bound checks.
    pub check: f64,
    /// Acceptance tolerance when certifying a nonsmooth saddle point.
    pub certificate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            displacement: Some(1e-12),
            check: 1e-9,
            certificate: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// JSON trace with full iterates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterates: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported config version {} (expected {CONFIG_VERSION})", self.version);
        }
        if matches!(self.problem, ProblemSource::Generator(_)) && self.seed.is_none() {
            bail!("`seed` is required when the problem comes from the generator");
        }
        if matches!(self.start, StartPoint::Random) && self.seed.is_none() {
            bail!("`seed` is required for a random start point");
        }
        Ok(())
    }
}
