//! Trace serialization: a CSV table with `# key=value` metadata lines, and a JSON document
//! carrying full iterates.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{BoundCheck, ValueBoundReport};
use crate::error::{Error, Result};
use crate::planner::{RateMode, StepPlan};
use crate::solver::{StepParams, Trace};

pub const TRACE_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "saddleprox-trace";

pub const CSV_COLUMNS: [&str; 9] = [
    "k",
    "dist2_x",
    "dist2_y",
    "f_hat",
    "gap_upper",
    "gap_lower",
    "margin_iterate",
    "margin_value_upper",
    "margin_value_lower",
];

/// Serde adapter storing a `DVector<f64>` as a plain list.
pub mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub mod opt_dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_seq(v.iter()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DVector<f64>>, D::Error> {
        Ok(Option::<Vec<f64>>::deserialize(d)?.map(DVector::from_vec))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: Option<u64>,
    pub mode: Option<RateMode>,
    pub params: Option<StepParams>,
    pub xi: Option<f64>,
}

impl TraceMeta {
    pub fn from_plan(plan: &StepPlan, seed: Option<u64>) -> Self {
        Self {
            seed,
            mode: Some(plan.mode),
            params: Some(plan.params()),
            xi: Some(plan.xi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub k: usize,
    pub dist2_x: Option<f64>,
    pub dist2_y: Option<f64>,
    pub f_hat: Option<f64>,
    pub gap_upper: Option<f64>,
    pub gap_lower: Option<f64>,
    pub margin_iterate: Option<f64>,
    pub margin_value_upper: Option<f64>,
    pub margin_value_lower: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub meta: TraceMeta,
    pub rows: Vec<CsvRow>,
}

fn min_slack_by_k(checks: &[BoundCheck], ids: &[&str]) -> BTreeMap<usize, f64> {
    let mut out: BTreeMap<usize, f64> = BTreeMap::new();
    for c in checks.iter().filter(|c| ids.contains(&c.id.as_str())) {
        let e = out.entry(c.k).or_insert(f64::INFINITY);
        *e = e.min(c.relative_slack());
    }
    out
}

impl TraceTable {
    /// Margins are the smallest relative slack of the matching checks at each `k`.
    pub fn from_trace(
        trace: &Trace,
        meta: TraceMeta,
        iterate_checks: Option<&[BoundCheck]>,
        value: Option<&ValueBoundReport>,
    ) -> Self {
        let it = iterate_checks
            .map(|c| min_slack_by_k(c, &["iterate_sum", "iterate_x", "iterate_y"]))
            .unwrap_or_default();
        let (vu, vl, vrows) = match value {
            Some(v) => (
                min_slack_by_k(&v.checks, &["value_upper"]),
                min_slack_by_k(&v.checks, &["value_lower"]),
                v.rows.iter().map(|r| (r.k, r)).collect::<BTreeMap<_, _>>(),
            ),
            None => Default::default(),
        };
        let rows = trace
            .records
            .iter()
            .map(|r| CsvRow {
                k: r.k,
                dist2_x: r.dist2_x,
                dist2_y: r.dist2_y,
                f_hat: r.ergodic.as_ref().map(|e| e.f_hat.to_f64()),
                gap_upper: vrows.get(&r.k).map(|v| v.upper),
                gap_lower: vrows.get(&r.k).map(|v| v.lower),
                margin_iterate: it.get(&r.k).copied(),
                margin_value_upper: vu.get(&r.k).copied(),
                margin_value_lower: vl.get(&r.k).copied(),
            })
            .collect();
        Self { meta, rows }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {MAGIC} v{TRACE_FORMAT_VERSION}")?;
        if let Some(s) = self.meta.seed {
            writeln!(w, "# seed={s}")?;
        }
        if let Some(m) = self.meta.mode {
            writeln!(w, "# mode={m}")?;
        }
        if let Some(p) = self.meta.params {
            writeln!(w, "# tau={:?}", p.tau)?;
            writeln!(w, "# sigma={:?}", p.sigma)?;
            writeln!(w, "# alpha={:?}", p.alpha)?;
            writeln!(w, "# beta={:?}", p.beta)?;
        }
        if let Some(xi) = self.meta.xi {
            writeln!(w, "# xi={xi:?}")?;
        }
        let mut cw = csv::Writer::from_writer(&mut w);
        for row in &self.rows {
            cw.serialize(row)?;
        }
        if self.rows.is_empty() {
            cw.write_record(CSV_COLUMNS)?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut meta_lines = Vec::new();
        let mut body = String::new();
        for line in r.lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(rest) => meta_lines.push(rest.trim().to_string()),
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let first = meta_lines
            .first()
            .ok_or_else(|| Error::Format("missing trace header line".into()))?;
        let expected = format!("{MAGIC} v{TRACE_FORMAT_VERSION}");
        if *first != expected {
            return Err(Error::Format(format!("unsupported trace header `{first}`, expected `{expected}`")));
        }
        let mut kv = BTreeMap::new();
        for l in &meta_lines[1..] {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed metadata line `{l}`")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<Option<f64>> {
            kv.get(key)
                .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("{key}: {e}"))))
                .transpose()
        };
        let params = match (num("tau")?, num("sigma")?, num("alpha")?, num("beta")?) {
            (Some(tau), Some(sigma), Some(alpha), Some(beta)) => Some(StepParams {
                tau,
                sigma,
                alpha,
                beta,
            }),
            (None, None, None, None) => None,
            _ => return Err(Error::Format("incomplete step parameters in header".into())),
        };
        let meta = TraceMeta {
            seed: kv
                .get("seed")
                .map(|s| s.parse::<u64>().map_err(|e| Error::Format(format!("seed: {e}"))))
                .transpose()?,
            mode: kv.get("mode").map(|m| m.parse()).transpose()?,
            params,
            xi: num("xi")?,
        };
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != CSV_COLUMNS {
            return Err(Error::Format(format!("unexpected columns {header:?}")));
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
        Ok(Self { meta, rows })
    }

    /// Column values by name. `dist2` is `dist2_x + dist2_y`.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let pick = |r: &CsvRow| -> Option<f64> {
            match name {
                "k" => Some(r.k as f64),
                "dist2" => Some(r.dist2_x? + r.dist2_y?),
                "dist2_x" => r.dist2_x,
                "dist2_y" => r.dist2_y,
                "f_hat" => r.f_hat,
                "gap_upper" => r.gap_upper,
                "gap_lower" => r.gap_lower,
                "margin_iterate" => r.margin_iterate,
                "margin_value_upper" => r.margin_value_upper,
                "margin_value_lower" => r.margin_value_lower,
                _ => None,
            }
        };
        if name != "dist2" && !CSV_COLUMNS.contains(&name) {
            return Err(Error::InvalidParameter(format!("unknown column `{name}`")));
        }
        self.rows
            .iter()
            .map(|r| pick(r).ok_or_else(|| Error::MissingData(format!("column `{name}` at k={}", r.k))))
            .collect()
    }
}

/// JSON trace with full iterates and the plan that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub version: u32,
    pub meta: TraceMeta,
    pub trace: Trace,
}

impl TraceDocument {
    pub fn new(meta: TraceMeta, trace: Trace) -> Self {
        Self {
            version: TRACE_FORMAT_VERSION,
            meta,
            trace,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        if doc.version != TRACE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported trace version {} (expected {TRACE_FORMAT_VERSION})",
                doc.version
            )));
        }
        Ok(doc)
    }
}
