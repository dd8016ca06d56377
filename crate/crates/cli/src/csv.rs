//! The benchmark CSV format: UTF-8, comma separated, header row, `.`
//! decimal point, shortest round-trip float formatting. One record per
//! (attempt, observable); a schema version column guards against silent
//! drift.
//!
//! Timing fields are machine-dependent and excluded from the determinism
//! contract: with timing disabled (the default) they are written as 0 and
//! the body is byte-identical for identical configurations.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER: &str = "schema,scenario,method,seed,n_samples,n_steps,dt,param,attempt,m,\
                          r_opt,r_raw,iterations,distance,wall_seconds,cost";

/// One CSV record. `m` labels the observable (`1`..`8`, `k1`..`k8`,
/// `exp`, `abs`, `n`); unused fields stay empty.
#[derive(Debug, Clone, Default)]
pub struct Record {
    pub param: Option<f64>,
    pub attempt: usize,
    pub m: String,
    pub r_opt: Option<f64>,
    pub r_raw: Option<f64>,
    pub iterations: Option<usize>,
    pub distance: Option<f64>,
    pub wall_seconds: f64,
    pub cost: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Renders the full CSV body (header + sorted records).
pub fn render(cfg: &RunConfig, records: &[Record]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 64);
    out.push_str(HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            SCHEMA_VERSION,
            cfg.scenario.name(),
            cfg.method.name(),
            cfg.seed,
            cfg.n_samples,
            cfg.n_steps,
            cfg.dt,
            fmt_opt(r.param),
            r.attempt,
            r.m,
            fmt_opt(r.r_opt),
            fmt_opt(r.r_raw),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            fmt_opt(r.distance),
            r.wall_seconds,
            fmt_opt(r.cost),
        );
    }
    out
}

/// Sorts records into the canonical emission order.
pub fn sort_records(records: &mut [Record]) {
    records.sort_by(|a, b| {
        a.param
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&b.param.unwrap_or(f64::NEG_INFINITY))
            .then(a.attempt.cmp(&b.attempt))
            .then(a.m.cmp(&b.m))
    });
}

pub fn write_file(path: &Path, body: &str) -> std::io::Result<()> {
    std::fs::write(path, body)
}

/// A parsed CSV row, for the summary pass.
#[derive(Debug, Clone)]
pub struct ParsedRow {
    pub scenario: String,
    pub n_samples: usize,
    pub dt: f64,
    pub param: Option<f64>,
    pub attempt: usize,
    pub m: String,
    pub r_opt: Option<f64>,
    pub r_raw: Option<f64>,
    pub iterations: Option<f64>,
    pub distance: Option<f64>,
}

/// Parses a benchmark CSV, reporting the line number of the first
/// malformed row.
pub fn parse(text: &str) -> Result<Vec<ParsedRow>, String> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or("empty file: missing header")?;
    if header != HEADER {
        return Err(format!("line 1: unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 16 {
            return Err(format!("line {lineno}: expected 16 fields, found {}", f.len()));
        }
        let opt = |s: &str, what: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| format!("line {lineno}: bad {what} '{s}': {e}"))
            }
        };
        let req = |s: &str, what: &str| -> Result<f64, String> {
            s.parse::<f64>().map_err(|e| format!("line {lineno}: bad {what} '{s}': {e}"))
        };
        rows.push(ParsedRow {
            scenario: f[1].to_string(),
            n_samples: req(f[4], "n_samples")? as usize,
            dt: req(f[6], "dt")?,
            param: opt(f[7], "param")?,
            attempt: req(f[8], "attempt")? as usize,
            m: f[9].to_string(),
            r_opt: opt(f[10], "r_opt")?,
            r_raw: opt(f[11], "r_raw")?,
            iterations: opt(f[12], "iterations")?,
            distance: opt(f[13], "distance")?,
        });
    }
    Ok(rows)
}

/// Context columns describing one run, reused when a file accumulates
/// sweeps over `n_samples` or `dt`.
pub fn render_multi(chunks: &[(RunConfig, Vec<Record>)]) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for (cfg, records) in chunks {
        let body = render(cfg, records);
        out.push_str(body.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
    }
    out
}

/// Plan runs emit their own tiny schema.
pub fn render_plan(plan: &pos_core::planner::ResourcePlan) -> String {
    format!(
        "schema,scenario,order_p,trunc_const,sample_sigma,budget,n_samples,n_steps,\
         predicted_error,error_ratio\n{},plan,{},{},{},{},{},{},{},{}\n",
        SCHEMA_VERSION,
        plan.order_p,
        plan.trunc_const,
        plan.sample_sigma,
        plan.budget,
        plan.n_samples,
        plan.n_steps,
        plan.predicted_error,
        plan.error_ratio,
    )
}
