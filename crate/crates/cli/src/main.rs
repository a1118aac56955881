//! `saddle-flow`: run, validate and reproduce saddle-flow experiments.
//!
//! Exit codes: 0 success, 1 validation failed, 2 bad configuration,
//! 3 integration stopped early (partial outputs written), 4 I/O error.

mod config;
mod output;
mod repro;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saddle_flow::diagnostics::{fit_rate, floor_for_log, oscillation_metrics};
use saddle_flow::experiments::{self, integer_grid};
use saddle_flow::Error;
use serde::Serialize;

use config::{LoadError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "saddle-flow", version, about = "Second-order primal-dual dynamics for saddle problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every configured variant and write CSV, JSON and SVG output.
    Run(RunArgs),
    /// Check the schedule admissibility conditions and print the report as JSON.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Regenerate the data and charts of one figure.
    Repro {
        #[arg(value_enum)]
        figure: repro::Figure,
        #[arg(long, value_name = "DIR", default_value = "repro")]
        out: PathBuf,
        /// Seed of the Gaussian data (fig5 only).
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
    },
    /// Fit log-log gap rates, from a config run or from trajectory CSV files.
    Rates {
        #[arg(long, value_name = "PATH", conflicts_with = "csv")]
        config: Option<PathBuf>,
        /// Trajectory CSV files written by `run`.
        #[arg(value_name = "CSV", required_unless_present = "config")]
        csv: Vec<PathBuf>,
        /// Start of the fit window (defaults to max(t0, t_end/4)).
        #[arg(long)]
        from: Option<f64>,
        /// End of the fit window (defaults to t_end).
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, value_name = "U64")]
        seed: Option<u64>,
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Base directory for relative output paths (defaults to the config's directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `problem.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides `integrator.samples`.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Config(String),
    Stopped(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Config(_) => 2,
            Failure::Stopped(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Config(m) | Failure::Stopped(m) | Failure::Io(m) => m,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

/// Errors from the core library: anything the configuration could have
/// caused maps to 2, numerical trouble to 3.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Argument(_) | Error::Construction(_) | Error::Domain { .. } | Error::Unsupported(_) => {
                Failure::Config(e.to_string())
            }
            Error::Numerical(_) | Error::Divergence { .. } | Error::BlowUp { .. } => Failure::Stopped(e.to_string()),
        }
    }
}

fn load(path: &Path, overrides: Overrides) -> Result<RunConfig, Failure> {
    config::load(path, overrides).map_err(|e| match e {
        LoadError::Io(m) => Failure::Io(m),
        LoadError::Config(c) => Failure::Config(format!("{}: {c}", path.display())),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Validate { config } => cmd_validate(&config),
        Command::Repro { figure, out, seed, samples } => repro::run(figure, &out, seed, samples),
        Command::Rates { config, csv, from, to, seed, samples } => {
            cmd_rates(config.as_deref(), &csv, from, to, Overrides { seed, samples })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("saddle-flow: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load(&args.config, Overrides { seed: args.seed, samples: args.samples })?;
    let base = match &args.out {
        Some(d) => d.clone(),
        None => args.config.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let paths = cfg.output.resolve(&base);
    let outcome = experiments::run(&cfg.spec)?;

    let mut names = Vec::new();
    for r in &outcome.runs {
        let partial = !r.completed();
        let path = paths.variant_csv(r.variant, partial);
        output::write_file(&path, &output::trajectory_csv(r)).map_err(|e| Failure::io(&path, e))?;
        // a stale file under the other name would contradict this run
        let other = paths.variant_csv(r.variant, !partial);
        if other.exists() {
            std::fs::remove_file(&other).map_err(|e| Failure::io(&other, e))?;
        }
        names.push(output::file_name(&path));
    }
    let summary = output::summary(&cfg.spec, &outcome, &names);
    output::write_file(&paths.json, &output::to_json(&summary)).map_err(|e| Failure::io(&paths.json, e))?;
    if let Some(svg) = &paths.svg {
        let chart = output::gap_chart("primal-dual gap", &outcome);
        output::write_file(svg, &chart.render()).map_err(|e| Failure::io(svg, e))?;
    }

    for s in &outcome.comparison.variants {
        let slope = s.rate_fit.map_or("n/a".to_string(), |f| format!("{:.3}", f.slope));
        match &s.failure {
            None => println!(
                "{}: gap({}) = {:e}, rate slope {slope}, ‖z‖ = {:e}",
                s.variant,
                s.final_t.unwrap_or(f64::NAN),
                s.final_gap.unwrap_or(f64::NAN),
                s.final_norm_z.unwrap_or(f64::NAN),
            ),
            Some(f) => println!("{}: stopped early ({f}); {} samples kept", s.variant, s.samples),
        }
    }
    if !outcome.all_completed() {
        let stopped: Vec<String> = outcome.runs.iter().filter(|r| !r.completed()).map(|r| r.variant.to_string()).collect();
        return Err(Failure::Stopped(format!(
            "variant(s) {} stopped before t_end; partial outputs written",
            stopped.join(", ")
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidateOutput {
    all_ok: bool,
    error: Option<String>,
    variants: Vec<ValidateEntry>,
}

#[derive(Serialize)]
struct ValidateEntry {
    variant: experiments::Variant,
    all_ok: bool,
    report: saddle_flow::schedule::ValidationReport,
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let cfg = load(path, Overrides::default())?;
    let spec = &cfg.spec;
    let grid = integer_grid(spec.t0, spec.t_end);
    let out = match spec.schedule.build(spec.t0) {
        Err(e @ Error::Construction(_)) => ValidateOutput { all_ok: false, error: Some(e.to_string()), variants: vec![] },
        Err(e) => return Err(e.into()),
        Ok(base) => {
            let mut variants = Vec::new();
            for v in &spec.variants {
                let report = v.apply(&base).validate(&grid)?;
                variants.push(ValidateEntry { variant: *v, all_ok: report.all_ok(), report });
            }
            ValidateOutput { all_ok: variants.iter().all(|v| v.all_ok), error: None, variants }
        }
    };
    print!("{}", output::to_json(&out));
    if out.all_ok {
        Ok(())
    } else {
        Err(Failure::Invalid("schedule fails admissibility checks".into()))
    }
}

#[derive(Serialize)]
struct RateEntry {
    source: String,
    window: (f64, f64),
    rate_fit: Option<saddle_flow::diagnostics::RateFit>,
    oscillation: Option<saddle_flow::diagnostics::OscillationReport>,
    error: Option<String>,
}

fn rate_entry(source: String, series: &[(f64, f64)], from: Option<f64>, to: Option<f64>) -> RateEntry {
    let t0 = series.first().map_or(f64::NAN, |p| p.0);
    let t_end = series.last().map_or(f64::NAN, |p| p.0);
    let window = (from.unwrap_or(t0.max(t_end / 4.0)), to.unwrap_or(t_end));
    let gaps = floor_for_log(series.iter().map(|p| p.1));
    let floored: Vec<(f64, f64)> = series.iter().map(|p| p.0).zip(gaps.iter().copied()).collect();
    let fit = fit_rate(&floored, window);
    RateEntry {
        source,
        window,
        rate_fit: fit.as_ref().ok().copied(),
        oscillation: oscillation_metrics(&gaps).ok(),
        error: fit.err().map(|e| e.to_string()),
    }
}

fn cmd_rates(
    config: Option<&Path>,
    csvs: &[PathBuf],
    from: Option<f64>,
    to: Option<f64>,
    overrides: Overrides,
) -> Result<(), Failure> {
    let mut entries = Vec::new();
    let mut stopped = false;
    if let Some(path) = config {
        let cfg = load(path, overrides)?;
        let outcome = experiments::run(&cfg.spec)?;
        stopped = !outcome.all_completed();
        for r in &outcome.runs {
            let (lo, hi) = cfg.spec.rate_window();
            entries.push(rate_entry(r.variant.to_string(), &output::gap_points(r), from.or(Some(lo)), to.or(Some(hi))));
        }
    }
    for path in csvs {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let series = output::read_gap_series(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        entries.push(rate_entry(path.display().to_string(), &series, from, to));
    }
    print!("{}", output::to_json(&entries));
    if stopped {
        return Err(Failure::Stopped("some variants stopped before t_end".into()));
    }
    Ok(())
}
