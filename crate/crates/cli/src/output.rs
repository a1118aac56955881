//! CSV and JSON serialization of experiment outcomes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use saddle_flow::diagnostics::{floor_for_log, DiagnosticsRecord, IntegralAccumulators};
use saddle_flow::experiments::{ExperimentOutcome, ExperimentSpec, ProblemSpec, ScheduleSpec, VariantRun, VariantSummary};
use saddle_flow::integrator::IntegratorConfig;
use saddle_flow::schedule::ValidationReport;
use serde::Serialize;

use crate::svg::{Chart, Series};

pub const CSV_HEADER: &str =
    "t,gap,grad_f_res,grad_g_res,delta,res_x,res_y,energy_e,energy_ebar,norm_z,dist_to_saddle,step";

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), num)
}

pub fn csv_row(r: &DiagnosticsRecord, step: f64) -> String {
    [
        num(r.t),
        num(r.gap),
        num(r.grad_f_res),
        num(r.grad_g_res),
        num(r.delta),
        num(r.res_x),
        num(r.res_y),
        opt(r.energy_e),
        opt(r.energy_ebar),
        num(r.norm_z),
        num(r.dist_to_saddle),
        num(step),
    ]
    .join(",")
}

pub fn trajectory_csv(run: &VariantRun) -> String {
    let mut out = String::with_capacity(run.records.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (r, step) in run.records.iter().zip(&run.steps) {
        out.push_str(&csv_row(r, *step));
        out.push('\n');
    }
    out
}

/// Columns `t,<name>,…` for series sampled on one shared grid.
pub fn columns_csv(t: &[f64], columns: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("t");
    for (name, _) in columns {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, ti) in t.iter().enumerate() {
        out.push_str(&num(*ti));
        for (_, col) in columns {
            out.push(',');
            out.push_str(&col.get(i).map_or_else(|| "NaN".into(), |v| num(*v)));
        }
        out.push('\n');
    }
    out
}

/// Reads the `t` and `gap` columns back from a trajectory CSV.
pub fn read_gap_series(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| cols.iter().position(|c| c.trim() == name).ok_or(format!("no `{name}` column"));
    let (ti, gi) = (find("t")?, find("gap")?);
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> Result<f64, String> {
            fields
                .get(i)
                .ok_or(format!("row {}: too few fields", n + 2))?
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("row {}: {e}", n + 2))
        };
        out.push((get(ti)?, get(gi)?));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct SpecEcho<'a> {
    pub problem: &'a ProblemSpec,
    pub schedule: &'a ScheduleSpec,
    pub t0: f64,
    pub t_end: f64,
    pub integrator: &'a IntegratorConfig,
    pub solver: saddle_flow::dynamics::SolveStrategy,
}

impl<'a> SpecEcho<'a> {
    pub fn new(spec: &'a ExperimentSpec) -> Self {
        Self {
            problem: &spec.problem,
            schedule: &spec.schedule,
            t0: spec.t0,
            t_end: spec.t_end,
            integrator: &spec.integrator,
            solver: spec.solve,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VariantEntry<'a> {
    pub csv: String,
    #[serde(flatten)]
    pub summary: &'a VariantSummary,
    pub accumulator_totals: Option<AccumulatorTotals>,
}

#[derive(Debug, Serialize)]
pub struct AccumulatorTotals {
    pub weighted_gap: f64,
    pub weighted_grad_f: f64,
    pub weighted_grad_g: f64,
    pub weighted_kinetic: Option<f64>,
    pub weighted_delta: f64,
}

impl From<&IntegralAccumulators> for AccumulatorTotals {
    fn from(a: &IntegralAccumulators) -> Self {
        Self {
            weighted_gap: a.weighted_gap.total,
            weighted_grad_f: a.weighted_grad_f.total,
            weighted_grad_g: a.weighted_grad_g.total,
            weighted_kinetic: a.weighted_kinetic.map(|k| k.total),
            weighted_delta: a.weighted_delta.total,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    /// `complete`, or `partial` when some variant stopped early.
    pub status: &'static str,
    pub spec: SpecEcho<'a>,
    pub validation: &'a ValidationReport,
    pub rate_window: (f64, f64),
    pub variants: Vec<VariantEntry<'a>>,
}

pub fn summary<'a>(spec: &'a ExperimentSpec, outcome: &'a ExperimentOutcome, csv_names: &[String]) -> Summary<'a> {
    Summary {
        status: if outcome.all_completed() { "complete" } else { "partial" },
        spec: SpecEcho::new(spec),
        validation: &outcome.validation,
        rate_window: outcome.comparison.rate_window,
        variants: outcome
            .comparison
            .variants
            .iter()
            .zip(csv_names)
            .map(|(s, csv)| VariantEntry {
                csv: csv.clone(),
                summary: s,
                accumulator_totals: s.accumulators.as_ref().map(AccumulatorTotals::from),
            })
            .collect(),
    }
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary types serialize");
    s.push('\n');
    s
}

/// Log-log chart of the primal-dual gap of every variant.
pub fn gap_chart(title: &str, outcome: &ExperimentOutcome) -> Chart {
    let series = outcome
        .runs
        .iter()
        .map(|r| Series::new(r.variant.name(), gap_points(r)))
        .collect();
    Chart::new(title, "t", "gap", series)
}

pub fn gap_points(run: &VariantRun) -> Vec<(f64, f64)> {
    let gaps = floor_for_log(run.records.iter().map(|r| r.gap));
    run.records.iter().map(|r| r.t).zip(gaps).collect()
}

pub fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
