//! Preset sweeps behind `saddle-flow repro`.

use std::path::Path;

use clap::ValueEnum;
use saddle_flow::experiments::{
    preset_example1, preset_example2, run as run_spec, Example1Case, ExperimentOutcome, ExperimentSpec, Variant,
    EXAMPLE2_DIMS,
};
use serde::Serialize;

use crate::output::{self, columns_csv, gap_points, to_json, write_file};
use crate::svg::{Chart, Series};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// γ sweep with and without Hessian damping, both quadratic cases, [1, 30].
    #[value(name = "fig1")]
    Fig1,
    /// Full / Hessian only / neither on both quadratic cases, [1, 80].
    #[value(name = "fig2")]
    Fig2,
    /// Full system against the `neither` ablation, [1, 30].
    #[value(name = "fig3_ablations")]
    Fig3Ablations,
    /// Objective error of the ℓ₂ problem in four dimensions, [1, 85].
    #[value(name = "fig5")]
    Fig5,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3Ablations => "fig3_ablations",
            Figure::Fig5 => "fig5",
        }
    }
}

pub const DEFAULT_SEED: u64 = 1;

const GAMMAS: [(f64, &str); 3] = [(2.0 / 15.0, "2_15"), (3.0 / 20.0, "3_20"), (1.0 / 6.0, "1_6")];
const CASES: [(Example1Case, &str); 2] = [(Example1Case::A, "case_a"), (Example1Case::B, "case_b")];

#[derive(Serialize)]
struct Panel<'a> {
    label: String,
    variants: &'a [saddle_flow::experiments::VariantSummary],
}

struct Writer<'a> {
    dir: &'a Path,
    stopped: Vec<String>,
}

impl Writer<'_> {
    fn file(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        write_file(&path, contents).map_err(|e| Failure::io(&path, e))
    }

    fn run(&mut self, label: &str, spec: &ExperimentSpec) -> Result<ExperimentOutcome, Failure> {
        eprintln!("running {label}");
        let outcome = run_spec(spec)?;
        for r in &outcome.runs {
            let suffix = if r.completed() { "" } else { ".partial" };
            self.file(&format!("{label}_{}{suffix}.csv", r.variant), &output::trajectory_csv(r))?;
            if !r.completed() {
                self.stopped.push(format!("{label}/{}", r.variant));
            }
        }
        Ok(outcome)
    }
}

fn with_samples(mut spec: ExperimentSpec, samples: Option<usize>) -> ExperimentSpec {
    if let Some(n) = samples {
        spec.integrator.sample_count = n;
    }
    spec
}

pub fn run(figure: Figure, out: &Path, seed: Option<u64>, samples: Option<usize>) -> Result<(), Failure> {
    let dir = out.join(figure.name());
    let mut w = Writer { dir: &dir, stopped: Vec::new() };
    let mut outcomes: Vec<(String, ExperimentOutcome)> = Vec::new();

    match figure {
        Figure::Fig1 => {
            for (case, case_name) in CASES {
                let mut series = Vec::new();
                for (gamma, g_name) in GAMMAS {
                    let spec = with_samples(
                        preset_example1(case, gamma, 30.0)?.with_variants(&[Variant::Full, Variant::NoHessian]),
                        samples,
                    );
                    let label = format!("{case_name}_gamma_{g_name}");
                    let outcome = w.run(&label, &spec)?;
                    for r in &outcome.runs {
                        series.push(Series::new(format!("γ={} {}", g_name.replace('_', "/"), r.variant), gap_points(r)));
                    }
                    outcomes.push((label, outcome));
                }
                let chart = Chart::new(format!("gap, {case_name}, γ sweep"), "t", "gap", series);
                w.file(&format!("{case_name}.svg"), &chart.render())?;
            }
        }
        Figure::Fig2 => {
            for (case, case_name) in CASES {
                let spec = with_samples(
                    preset_example1(case, 2.0 / 15.0, 80.0)?.with_variants(&[
                        Variant::Full,
                        Variant::NoTikhonov,
                        Variant::Neither,
                    ]),
                    samples,
                );
                let outcome = w.run(case_name, &spec)?;
                let mut series = Vec::new();
                for r in &outcome.runs {
                    let t: Vec<f64> = r.records.iter().map(|x| x.t).collect();
                    let names = ["x1", "x2", "y1", "y2"];
                    let cols: Vec<(String, Vec<f64>)> = (0..4)
                        .map(|k| {
                            let vals = r.states.iter().map(|s| if k < 2 { s.x[k] } else { s.y[k - 2] }).collect();
                            (names[k].to_string(), vals)
                        })
                        .collect();
                    w.file(&format!("{case_name}_{}_state.csv", r.variant), &columns_csv(&t, &cols))?;
                    let norm = r.records.iter().map(|x| (x.t, x.norm_z)).collect();
                    series.push(Series::new(r.variant.name(), norm));
                }
                let chart = Chart::new(format!("distance to the minimal-norm saddle, {case_name}"), "t", "|z(t)|", series);
                w.file(&format!("{case_name}.svg"), &chart.render())?;
                outcomes.push((case_name.to_string(), outcome));
            }
        }
        Figure::Fig3Ablations => {
            for (case, case_name) in CASES {
                let spec = with_samples(
                    preset_example1(case, 2.0 / 15.0, 30.0)?.with_variants(&[Variant::Full, Variant::Neither]),
                    samples,
                );
                let outcome = w.run(case_name, &spec)?;
                let chart = output::gap_chart(&format!("gap, {case_name}"), &outcome);
                w.file(&format!("{case_name}.svg"), &chart.render())?;
                outcomes.push((case_name.to_string(), outcome));
            }
        }
        Figure::Fig5 => {
            let seed = seed.unwrap_or(DEFAULT_SEED);
            for (n, m) in EXAMPLE2_DIMS {
                let spec = with_samples(
                    preset_example2(n, m, seed, 85.0)?.with_variants(&[
                        Variant::Full,
                        Variant::NoHessian,
                        Variant::Neither,
                    ]),
                    samples,
                );
                let label = format!("n{n}_m{m}");
                let outcome = w.run(&label, &spec)?;
                let t: Vec<f64> = outcome.runs[0].records.iter().map(|x| x.t).collect();
                let cols: Vec<(String, Vec<f64>)> = outcome
                    .runs
                    .iter()
                    .map(|r| (r.variant.to_string(), r.objective_error.clone().unwrap_or_default()))
                    .collect();
                w.file(&format!("{label}_objective.csv"), &columns_csv(&t, &cols))?;
                let series = outcome
                    .runs
                    .iter()
                    .map(|r| {
                        let pts = r.records.iter().map(|x| x.t).zip(r.objective_error.clone().unwrap_or_default()).collect();
                        Series::new(r.variant.name(), pts)
                    })
                    .collect();
                let chart = Chart::new(format!("objective error, n = {n}, m = {m}"), "t", "objective error", series);
                w.file(&format!("{label}.svg"), &chart.render())?;
                outcomes.push((label, outcome));
            }
        }
    }

    let panels: Vec<Panel> = outcomes
        .iter()
        .map(|(label, o)| Panel { label: label.clone(), variants: &o.comparison.variants })
        .collect();
    w.file("summary.json", &to_json(&panels))?;
    eprintln!("wrote {}", dir.display());
    if !w.stopped.is_empty() {
        return Err(Failure::Stopped(format!(
            "stopped before t_end: {}; partial outputs written",
            w.stopped.join(", ")
        )));
    }
    Ok(())
}
