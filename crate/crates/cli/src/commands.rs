use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use saddleprox::diagnostics::{self, default_window, fit_rate, relative_floor, summarize};
use saddleprox::nalgebra::DVector;
use saddleprox::oracle::{certify_saddle, generate_instance, random_start, solve_quadratic_saddle};
use saddleprox::planner::{self, PlannerOptions};
use saddleprox::solver::{run, RunOptions};
use saddleprox::{
    BoundCheck, CheckSummary, GeneratorSpec, OraclePoint, PlanReport, ProblemDocument, QuadraticSaddleInstance,
    RateMode, SaddlePointCertificate, SaddleProblem, StepParams, Trace, TraceDocument, TraceMeta, TraceTable,
};

use crate::config::{PlanSource, ProblemSource, RunConfig, StartPoint};

/// Creates `path`, and its parent directory if missing.
fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Copy)]
pub struct PlanArgs {
    pub mu: f64,
    pub nu: f64,
    pub norm_k: f64,
    pub mode: RateMode,
    pub options: PlannerOptions,
}

pub fn print_plan(r: &PlanReport, w: &mut dyn Write) -> std::io::Result<()> {
    let p = &r.plan;
    let c = &r.certificate;
    writeln!(w, "mode      {}", p.mode)?;
    writeln!(w, "mu        {:e}", r.mu)?;
    writeln!(w, "nu        {:e}", r.nu)?;
    writeln!(w, "norm_k    {:e}", r.norm_k)?;
    writeln!(w, "halvings  {}", r.halvings)?;
    for (k, v) in [
        ("tau", p.tau),
        ("sigma", p.sigma),
        ("alpha", p.alpha),
        ("beta", p.beta),
        ("xi", p.xi),
        ("eta1", c.eta1),
        ("eta2", c.eta2),
        ("eta3", c.eta3),
        ("eta4", c.eta4),
    ] {
        writeln!(w, "{k:<9} {v:.12e}")?;
    }
    writeln!(w)?;
    writeln!(w, "{:<22} {:>14}  {:<6}  status", "inequality", "slack", "strict")?;
    for m in &r.margins {
        writeln!(
            w,
            "{:<22} {:>14.6e}  {:<6}  {}",
            m.id,
            m.slack,
            if m.strict { "yes" } else { "no" },
            if m.pass { "ok" } else { "FAIL" }
        )?;
    }
    Ok(())
}

/// Returns `false` when no feasible plan exists (the diagnostic is printed).
pub fn cmd_plan(args: &PlanArgs, out: Option<&Path>, w: &mut dyn Write) -> anyhow::Result<bool> {
    match planner::plan(args.mu, args.nu, args.norm_k, args.mode, &args.options) {
        Ok(report) => {
            print_plan(&report, w)?;
            if let Some(path) = out {
                write_json(path, &report)?;
            }
            Ok(report.margins.iter().all(|m| m.pass))
        }
        Err(saddleprox::Error::Infeasible { attempts, inequality }) => {
            writeln!(w, "infeasible: no plan after {attempts} step sizes; last failed inequality: {inequality}")?;
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOverrides {
    pub seed: Option<u64>,
    pub mode: Option<RateMode>,
    /// Trace CSV path.
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub passed: bool,
    pub summaries: Vec<CheckSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub iterations: usize,
    pub final_dist2: Option<f64>,
    pub report: CheckReport,
    pub trace_path: PathBuf,
}

fn build_problem(cfg: &RunConfig, seed: Option<u64>) -> anyhow::Result<SaddleProblem> {
    Ok(match &cfg.problem {
        ProblemSource::Generator(g) => {
            let seed = seed.ok_or_else(|| anyhow!("`seed` is required with the generator"))?;
            generate_instance(&GeneratorSpec {
                n: g.n,
                m: g.m,
                mu: g.mu,
                nu: g.nu,
                norm_k: g.norm_k,
                seed,
            })?
            .0
        }
        ProblemSource::Inline(doc) => doc.build()?,
    })
}

fn start_point(cfg: &RunConfig, p: &SaddleProblem, seed: Option<u64>) -> anyhow::Result<(DVector<f64>, DVector<f64>)> {
    Ok(match &cfg.start {
        StartPoint::Zeros => (DVector::zeros(p.n()), DVector::zeros(p.m())),
        StartPoint::Random => {
            let seed = seed.ok_or_else(|| anyhow!("`seed` is required for a random start"))?;
            random_start(p.n(), p.m(), seed)
        }
        StartPoint::Point { x0, y0 } => (DVector::from_column_slice(x0), DVector::from_column_slice(y0)),
    })
}

/// Quadratic problems get an exact KKT solution; others none.
fn quadratic_oracle(p: &SaddleProblem) -> anyhow::Result<Option<SaddlePointCertificate>> {
    match QuadraticSaddleInstance::from_problem(p) {
        Some(inst) => Ok(Some(solve_quadratic_saddle(&inst)?)),
        None => Ok(None),
    }
}

struct CheckRun {
    iterate: Option<Vec<BoundCheck>>,
    value: Option<diagnostics::ValueBoundReport>,
    other: Vec<BoundCheck>,
}

impl CheckRun {
    fn report(&self, f_star: Option<f64>) -> CheckReport {
        let mut all: Vec<BoundCheck> = self.other.clone();
        if let Some(c) = &self.iterate {
            all.extend(c.iter().cloned());
        }
        if let Some(v) = &self.value {
            all.extend(v.checks.iter().cloned());
        }
        let summaries = summarize(&all);
        CheckReport {
            passed: summaries.iter().all(|s| s.failures == 0),
            summaries,
            empirical_m: self.value.as_ref().map(|v| v.empirical_m),
            f_star,
        }
    }
}

fn run_checks(
    p: &SaddleProblem,
    trace: &Trace,
    report: &PlanReport,
    oracle: &SaddlePointCertificate,
    tol: f64,
) -> anyhow::Result<CheckRun> {
    let iterate = if report.plan.mode.is_value() {
        None
    } else {
        Some(diagnostics::check_iterate_bound(
            trace,
            &report.plan,
            &report.certificate,
            report.norm_k,
            &oracle.point,
            tol,
        )?)
    };
    let value = if report.plan.mode.is_value() {
        Some(diagnostics::check_value_bound(trace, &report.plan, oracle.f_star, &oracle.point, tol)?)
    } else {
        None
    };
    let mut other = Vec::new();
    if trace.records.iter().all(|r| r.iterate.is_some()) {
        let pts = [(oracle.point.x.clone(), oracle.point.y.clone())];
        other.extend(diagnostics::check_proximal_inequalities(p, trace, &pts, tol)?);
        other.extend(diagnostics::check_saddle_descent(p, trace, &oracle.point, tol)?);
    }
    Ok(CheckRun { iterate, value, other })
}

pub fn print_summaries(summaries: &[CheckSummary], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "{:<22} {:>7} {:>9} {:>16} {:>8}", "check", "count", "failures", "min rel. slack", "worst k")?;
    for s in summaries {
        writeln!(
            w,
            "{:<22} {:>7} {:>9} {:>16.6e} {:>8}",
            s.id,
            s.count,
            s.failures,
            s.min_relative_slack,
            s.worst_k.map_or("-".to_string(), |k| k.to_string())
        )?;
    }
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig, ov: &SolveOverrides, w: &mut dyn Write) -> anyhow::Result<SolveSummary> {
    let seed = ov.seed.or(cfg.seed);
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    cfg.validate()?;
    let trace_path = ov
        .out
        .clone()
        .or_else(|| cfg.outputs.trace.clone())
        .ok_or_else(|| anyhow!("no trace output path (set outputs.trace or pass --out)"))?;
    let tol = ov.tol.unwrap_or(cfg.tolerances.check);

    let problem = build_problem(&cfg, seed)?;
    let (plan_report, params, xi, mode): (Option<PlanReport>, StepParams, Option<f64>, Option<RateMode>) =
        match &cfg.plan {
            PlanSource::Planner(pc) => {
                let mode = ov.mode.unwrap_or(pc.mode);
                let r = planner::plan(problem.mu(), problem.nu(), problem.norm_k(), mode, &pc.options)?;
                let params = r.plan.params();
                let xi = r.plan.xi;
                (Some(r), params, Some(xi), Some(mode))
            }
            PlanSource::Explicit(e) => {
                if ov.mode.is_some() {
                    bail!("--mode applies only to planner configs");
                }
                let params = StepParams {
                    tau: e.tau,
                    sigma: e.sigma,
                    alpha: e.alpha,
                    beta: e.beta,
                };
                params.validate()?;
                (None, params, e.xi, None)
            }
        };
    let (x0, y0) = start_point(&cfg, &problem, seed)?;
    let oracle = quadratic_oracle(&problem)?;
    let opts = RunOptions {
        max_iter: cfg.max_iter,
        displacement_tol: cfg.tolerances.displacement,
        oracle: oracle.as_ref().map(|c| c.point.clone()),
        oracle_tol: None,
        ergodic_xi: xi,
        keep_iterates: cfg.outputs.iterates.is_some(),
    };
    let trace = run(&problem, &params, x0, y0, &opts)?;

    let checks = match (&plan_report, &oracle) {
        (Some(r), Some(o)) => Some(run_checks(&problem, &trace, r, o, tol)?),
        _ => None,
    };
    let meta = TraceMeta {
        seed,
        mode,
        params: Some(params),
        xi,
    };
    let table = TraceTable::from_trace(
        &trace,
        meta.clone(),
        checks.as_ref().and_then(|c| c.iterate.as_deref()),
        checks.as_ref().and_then(|c| c.value.as_ref()),
    );
    {
        let mut bw = create(&trace_path)?;
        table.write_csv(&mut bw)?;
        bw.flush()?;
    }
    if let Some(path) = &cfg.outputs.iterates {
        write_json(path, &TraceDocument::new(meta, trace.clone()))?;
    }
    if let (Some(path), Some(r)) = (&cfg.outputs.plan, &plan_report) {
        write_json(path, r)?;
    }
    if let Some(path) = &cfg.outputs.instance {
        write_json(path, &problem.to_document()?)?;
    }
    let report = checks
        .map(|c| c.report(oracle.as_ref().map(|o| o.f_star)))
        .unwrap_or(CheckReport {
            passed: true,
            summaries: Vec::new(),
            empirical_m: None,
            f_star: oracle.as_ref().map(|o| o.f_star),
        });
    if let Some(path) = &cfg.outputs.report {
        write_json(path, &report)?;
    }

    let last = trace.last();
    let final_dist2 = last.dist2_x.zip(last.dist2_y).map(|(a, b)| a + b);
    writeln!(w, "iterations  {}", last.k)?;
    writeln!(w, "stop        {:?}", trace.stop)?;
    if let Some(d) = final_dist2 {
        writeln!(w, "final dist2 {d:e}")?;
    }
    if !report.summaries.is_empty() {
        print_summaries(&report.summaries, w)?;
    }
    writeln!(w, "trace       {}", trace_path.display())?;
    Ok(SolveSummary {
        iterations: last.k,
        final_dist2,
        report,
        trace_path,
    })
}

/// Returns the report; `report.passed` is `false` when any check fails.
pub fn cmd_check(
    trace_path: &Path,
    plan_path: &Path,
    instance_path: &Path,
    tol: f64,
    certificate_tol: f64,
    out: Option<&Path>,
    w: &mut dyn Write,
) -> anyhow::Result<CheckReport> {
    let text = std::fs::read_to_string(trace_path).with_context(|| format!("reading {}", trace_path.display()))?;
    let doc = TraceDocument::from_json(&text).with_context(|| format!("parsing {}", trace_path.display()))?;
    let plan: PlanReport = read_json(plan_path)?;
    let instance: ProblemDocument = read_json(instance_path)?;
    let problem = instance.build()?;

    if doc.meta.params != Some(plan.plan.params()) || doc.meta.xi != Some(plan.plan.xi) {
        bail!(
            "trace/plan mismatch: trace header has {:?} (xi {:?}), plan has {:?} (xi {})",
            doc.meta.params,
            doc.meta.xi,
            plan.plan.params(),
            plan.plan.xi
        );
    }
    if doc.meta.mode.is_some_and(|m| m != plan.plan.mode) {
        bail!("trace/plan mismatch: trace mode {:?}, plan mode {}", doc.meta.mode, plan.plan.mode);
    }
    let oracle = match quadratic_oracle(&problem)? {
        Some(o) => o,
        None => {
            let last = doc
                .trace
                .last()
                .iterate
                .as_ref()
                .ok_or_else(|| anyhow!("trace has no stored iterates to certify"))?;
            certify_saddle(&problem, &last.x, &last.y, certificate_tol)
                .context("certifying the final iterate as the reference saddle point")?
        }
    };
    let checks = run_checks(&problem, &doc.trace, &plan, &oracle, tol)?;
    let report = checks.report(Some(oracle.f_star));
    print_summaries(&report.summaries, w)?;
    writeln!(w, "{}", if report.passed { "all checks passed" } else { "CHECK FAILURES" })?;
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

pub struct RateArgs {
    pub column: String,
    /// Inclusive index range.
    pub window: Option<(usize, usize)>,
    /// Values at or below `floor * max(series)` count as numerical zeros.
    pub floor: f64,
    /// Allowed excess of the fitted rate over the planned `xi`.
    pub max_excess: f64,
    pub xi: Option<f64>,
}

pub fn parse_window(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("window must look like START:END, got `{s}`"))?;
    let a: usize = a.trim().parse().with_context(|| format!("window start `{a}`"))?;
    let b: usize = b.trim().parse().with_context(|| format!("window end `{b}`"))?;
    if b < a {
        bail!("window end {b} is before start {a}");
    }
    Ok((a, b))
}

/// Returns `(fit, within_margin)`.
pub fn cmd_rate(trace_path: &Path, args: &RateArgs, w: &mut dyn Write) -> anyhow::Result<(diagnostics::RateFit, bool)> {
    let f = File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
    let table = TraceTable::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", trace_path.display()))?;
    let series = table.column(&args.column)?;
    let window = match args.window {
        Some((a, b)) => a..b.saturating_add(1),
        None => default_window(series.len()),
    };
    let floor = relative_floor(&series, args.floor);
    let fit = fit_rate(&series, window, floor)?;
    let xi = args.xi.or(table.meta.xi);
    writeln!(w, "column        {}", args.column)?;
    writeln!(w, "window        {}..={}", fit.start, fit.end - 1)?;
    writeln!(w, "points        {}", fit.points)?;
    writeln!(w, "fitted rate   {:.9}", fit.rate)?;
    writeln!(w, "residual rms  {:.3e}", fit.residual_rms)?;
    let ok = match xi {
        Some(xi) => {
            let ok = fit.rate <= xi + args.max_excess;
            writeln!(w, "planned xi    {xi:.9}")?;
            writeln!(w, "{}", if ok { "within margin" } else { "RATE EXCEEDS PLANNED XI" })?;
            ok
        }
        None => {
            writeln!(w, "no planned xi in trace header; margin not checked")?;
            true
        }
    };
    Ok((fit, ok))
}

/// Convenience for tests and scripts: the oracle point of a quadratic problem document.
pub fn oracle_for(doc: &ProblemDocument) -> anyhow::Result<Option<OraclePoint>> {
    Ok(quadratic_oracle(&doc.build()?)?.map(|c| c.point))
}
