//! Reproducible experiment presets, variant sweeps and comparison summaries.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    accumulate, fit_rate, floor_for_log, oscillation_metrics, record, DiagnosticsRecord, IntegralAccumulators,
    OscillationReport, RateFit, ReferenceSaddle,
};
use crate::dynamics::{Dynamics, SolveStrategy, SystemState};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationStats, IntegratorConfig};
use crate::problem::{BilinearQuadraticParams, L2RegularizedParams, ProblemFamily, SaddleProblem};
use crate::schedule::{case1_gamma_bound, Schedule, TimeFn, ValidationReport};

/// Environment variable capping the number of variants integrated at once.
pub const THREADS_ENV: &str = "SADDLE_FLOW_THREADS";

/// Dimension settings `(n, m)` of the ℓ₂ sweep.
pub const EXAMPLE2_DIMS: [(usize, usize); 4] = [(10, 3), (50, 20), (100, 50), (200, 100)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoHessian,
    NoTikhonov,
    Neither,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoHessian, Variant::NoTikhonov, Variant::Neither];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoHessian => "no_hessian",
            Variant::NoTikhonov => "no_tikhonov",
            Variant::Neither => "neither",
        }
    }

    /// `(drop_hessian, drop_tikhonov)`
    pub fn drops(self) -> (bool, bool) {
        match self {
            Variant::Full => (false, false),
            Variant::NoHessian => (true, false),
            Variant::NoTikhonov => (false, true),
            Variant::Neither => (true, true),
        }
    }

    pub fn apply(self, s: &Schedule) -> Schedule {
        let (h, t) = self.drops();
        if !h && !t {
            return s.clone();
        }
        s.ablation_variant(h, t)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemSpec {
    BilinearQuadratic(BilinearQuadraticParams),
    /// Gaussian data `K ∈ R^{m×n}`, `b ∈ R^m` drawn from `seed`.
    L2Regularized { n: usize, m: usize, omega: f64, seed: u64 },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<SaddleProblem> {
        match self {
            ProblemSpec::BilinearQuadratic(p) => SaddleProblem::bilinear_quadratic(*p),
            ProblemSpec::L2Regularized { n, m, omega, seed } => {
                let (k, b) = gaussian_data(*n, *m, *seed)?;
                SaddleProblem::l2_regularized(L2RegularizedParams::new(k, b, *omega)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSpec {
    /// `ε(t) = coef · t^exponent`
    Power { coef: f64, exponent: f64 },
}

impl EpsilonSpec {
    pub fn build(&self) -> Result<TimeFn> {
        match *self {
            EpsilonSpec::Power { coef, exponent } => {
                if !(coef >= 0.0 && coef.is_finite() && exponent.is_finite()) {
                    return Err(Error::Construction(format!(
                        "epsilon needs coef >= 0 and finite exponent, got ({coef}, {exponent})"
                    )));
                }
                Ok(if coef == 0.0 { TimeFn::zero() } else { TimeFn::power(coef, exponent) })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Case1 { alpha: f64, beta_exp: f64, gamma: f64, epsilon: EpsilonSpec },
    Case2 { beta_exp: f64, gamma: f64 },
}

impl ScheduleSpec {
    pub fn build(&self, t0: f64) -> Result<Schedule> {
        match *self {
            ScheduleSpec::Case1 { alpha, beta_exp, gamma, epsilon } => {
                Schedule::case1(alpha, beta_exp, gamma, epsilon.build()?, t0)
            }
            ScheduleSpec::Case2 { beta_exp, gamma } => Schedule::case2(gamma, beta_exp, t0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub schedule: ScheduleSpec,
    pub t0: f64,
    pub t_end: f64,
    pub initial: SystemState,
    pub variants: Vec<Variant>,
    pub integrator: IntegratorConfig,
    pub solve: SolveStrategy,
    /// Window of the log-log gap fit in the summary; defaults to `[t_end/4, t_end]`.
    pub rate_window: Option<(f64, f64)>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 >= 1.0 && self.t_end > self.t0 && self.t_end.is_finite()) {
            return Err(Error::Argument(format!(
                "need 1 <= t0 < t_end, got [{}, {}]",
                self.t0, self.t_end
            )));
        }
        if self.variants.is_empty() {
            return Err(Error::Argument("at least one variant is required".into()));
        }
        if !self.initial.is_finite() {
            return Err(Error::Argument("initial state is not finite".into()));
        }
        self.integrator.validate()
    }

    pub fn rate_window(&self) -> (f64, f64) {
        self.rate_window.unwrap_or((self.t0.max(self.t_end / 4.0), self.t_end))
    }

    pub fn with_variants(mut self, variants: &[Variant]) -> Self {
        self.variants = variants.to_vec();
        self
    }

    /// Integer times `t0, t0 + 1, …` up to `t_end`, plus `t_end` itself.
    pub fn validation_grid(&self) -> Vec<f64> {
        integer_grid(self.t0, self.t_end)
    }
}

pub fn integer_grid(t0: f64, t_end: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..).map(|i| t0 + i as f64).take_while(|t| *t <= t_end).collect();
    if grid.last().is_some_and(|t| *t < t_end) {
        grid.push(t_end);
    }
    grid
}

/// Parameter cases of the quadratic min-max example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example1Case {
    /// `(m, n, j, k) = (1, 6, 4, 10)`
    A,
    /// `(m, n, j, k) = (1, 10, 15, 1)`
    B,
}

impl Example1Case {
    pub fn params(self) -> BilinearQuadraticParams {
        let (m, n, j, k) = match self {
            Example1Case::A => (1.0, 6.0, 4.0, 10.0),
            Example1Case::B => (1.0, 10.0, 15.0, 1.0),
        };
        BilinearQuadraticParams { m, n, j, k }
    }
}

fn filled(n: usize, v: f64) -> DVector<f64> {
    DVector::from_element(n, v)
}

/// Quadratic min-max preset: `α = 19`, `β(t) = t`, `ε(t) = 2/t²`, `t0 = 1`,
/// `x(1) = y(1) = (1, 1.5)`, `ẋ(1) = ẏ(1) = (1, 1)`.
pub fn preset_example1(case: Example1Case, gamma_c: f64, t_end: f64) -> Result<ExperimentSpec> {
    let bound = case1_gamma_bound(19.0, 1.0);
    if !(gamma_c > 0.0 && gamma_c <= bound) {
        return Err(Error::Argument(format!("gamma must lie in (0, {bound}], got {gamma_c}")));
    }
    let start = DVector::from_vec(vec![1.0, 1.5]);
    Ok(ExperimentSpec {
        problem: ProblemSpec::BilinearQuadratic(case.params()),
        schedule: ScheduleSpec::Case1 {
            alpha: 19.0,
            beta_exp: 1.0,
            gamma: gamma_c,
            epsilon: EpsilonSpec::Power { coef: 2.0, exponent: -2.0 },
        },
        t0: 1.0,
        t_end,
        initial: SystemState::new(start.clone(), start, filled(2, 1.0), filled(2, 1.0))?,
        variants: vec![Variant::Full],
        integrator: IntegratorConfig::default(),
        solve: SolveStrategy::default(),
        rate_window: None,
    })
}

/// ℓ₂-regularized preset with `ω = 1`, Case 1 schedule `(19, 1, 1/6)`,
/// `ε(t) = 1/t⁸` and every state block set to ones.
pub fn preset_example2(n: usize, m: usize, seed: u64, t_end: f64) -> Result<ExperimentSpec> {
    if n == 0 || m == 0 {
        return Err(Error::Argument(format!("dimensions must be positive, got ({n}, {m})")));
    }
    Ok(ExperimentSpec {
        problem: ProblemSpec::L2Regularized { n, m, omega: 1.0, seed },
        schedule: ScheduleSpec::Case1 {
            alpha: 19.0,
            beta_exp: 1.0,
            gamma: 1.0 / 6.0,
            epsilon: EpsilonSpec::Power { coef: 1.0, exponent: -8.0 },
        },
        t0: 1.0,
        t_end,
        initial: SystemState::new(filled(n, 1.0), filled(m, 1.0), filled(n, 1.0), filled(m, 1.0))?,
        variants: vec![Variant::Full],
        integrator: IntegratorConfig::default(),
        solve: SolveStrategy::default(),
        rate_window: None,
    })
}

/// Standard normal draws from a seeded ChaCha8 stream via Box-Muller.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    fn uniform_open(&mut self) -> f64 {
        // (0, 1]: never zero so the logarithm stays finite
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform_open().ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * self.uniform_open();
        self.spare = Some(r * phi.sin());
        r * phi.cos()
    }
}

/// `K` (m×n, filled row by row) followed by `b` (length m) from one stream.
pub fn gaussian_data(n: usize, m: usize, seed: u64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if n == 0 || m == 0 {
        return Err(Error::Argument(format!("dimensions must be positive, got ({n}, {m})")));
    }
    let mut g = GaussianSampler::new(seed);
    let k = DMatrix::from_row_iterator(m, n, (0..m * n).map(|_| g.next()));
    let b = DVector::from_iterator(m, (0..m).map(|_| g.next()));
    Ok((k, b))
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: Variant,
    pub schedule: Schedule,
    pub records: Vec<DiagnosticsRecord>,
    /// Size of the integrator step that landed on each sample.
    pub steps: Vec<f64>,
    /// Accumulator totals after each sample.
    pub accumulators: Vec<IntegralAccumulators>,
    /// `Φ(x(t)) − Φ(x*)` per sample for the ℓ₂ family.
    pub objective_error: Option<Vec<f64>>,
    /// State at each sample.
    pub states: Vec<SystemState>,
    pub stats: Option<IntegrationStats>,
    /// Set when the integration stopped early; the series above are partial.
    pub failure: Option<Error>,
}

impl VariantRun {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_state(&self) -> Option<&SystemState> {
        self.states.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn gap_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.gap)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub completed: bool,
    pub failure: Option<String>,
    pub samples: usize,
    pub rate_fit: Option<RateFit>,
    pub oscillation: Option<OscillationReport>,
    pub final_t: Option<f64>,
    pub final_gap: Option<f64>,
    pub final_norm_z: Option<f64>,
    pub final_dist_to_saddle: Option<f64>,
    pub final_dist_to_solution_set: Option<f64>,
    pub final_objective_error: Option<f64>,
    pub accumulators: Option<IntegralAccumulators>,
    pub stats: Option<IntegrationStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub rate_window: (f64, f64),
    pub variants: Vec<VariantSummary>,
}

impl ComparisonResult {
    pub fn get(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub problem: SaddleProblem,
    pub saddle: ReferenceSaddle,
    pub validation: ValidationReport,
    pub runs: Vec<VariantRun>,
    pub comparison: ComparisonResult,
}

impl ExperimentOutcome {
    pub fn run_for(&self, v: Variant) -> Option<&VariantRun> {
        self.runs.iter().find(|r| r.variant == v)
    }

    pub fn all_completed(&self) -> bool {
        self.runs.iter().all(VariantRun::completed)
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse::<usize>().ok().filter(|n| *n > 0)
}

/// Integrates every requested variant on a shared grid and assembles the
/// diagnostics and comparison. Divergence of one variant is recorded in its
/// [`VariantRun::failure`] and does not stop the others.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let problem = spec.problem.build()?;
    let schedule = spec.schedule.build(spec.t0)?;
    let validation = schedule.validate(&spec.validation_grid())?;
    if !validation.all_ok() {
        let worst = validation
            .worst_violation
            .as_ref()
            .map(|v| format!("{:?} at t = {} (by {:e})", v.condition, v.t, v.magnitude))
            .unwrap_or_default();
        return Err(Error::Construction(format!("schedule fails admissibility checks: {worst}")));
    }
    if spec.initial.n() != problem.n() || spec.initial.m() != problem.m() {
        return Err(Error::Argument(format!(
            "initial state has dims ({}, {}), problem has ({}, {})",
            spec.initial.n(),
            spec.initial.m(),
            problem.n(),
            problem.m()
        )));
    }
    let saddle = ReferenceSaddle::for_problem(&problem)?;

    let mut variants: Vec<Variant> = Vec::new();
    for v in &spec.variants {
        if !variants.contains(v) {
            variants.push(*v);
        }
    }
    let one = |v: &Variant| run_variant(spec, &problem, &schedule, &saddle, *v);
    let runs: Vec<Result<VariantRun>> = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(|| variants.par_iter().map(one).collect()),
        None => variants.par_iter().map(one).collect(),
    };
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let window = spec.rate_window();
    let comparison = ComparisonResult {
        rate_window: window,
        variants: runs.iter().map(|r| summarize(&problem, r, window)).collect(),
    };
    Ok(ExperimentOutcome { problem, saddle, validation, runs, comparison })
}

fn run_variant(
    spec: &ExperimentSpec,
    problem: &SaddleProblem,
    base: &Schedule,
    saddle: &ReferenceSaddle,
    variant: Variant,
) -> Result<VariantRun> {
    let schedule = variant.apply(base);
    let mut dynamics = Dynamics::new(problem.clone(), schedule.clone(), spec.solve);
    let (n, m) = (problem.n(), problem.m());
    let mut raw = Vec::new();
    let outcome = integrate(
        |t, y| dynamics.derivative(t, y),
        spec.t0,
        spec.t_end,
        &spec.initial.to_flat(),
        &spec.integrator,
        |s| raw.push((s.t, s.state.clone(), s.accepted_step)),
    );
    let (stats, failure) = match outcome {
        Ok(traj) => (Some(traj.stats), None),
        Err(e @ (Error::Divergence { .. } | Error::BlowUp { .. })) => (None, Some(e)),
        Err(e) => return Err(e),
    };

    let l2 = match problem.family() {
        ProblemFamily::L2Regularized(p) => Some(p),
        _ => None,
    };
    let mut records = Vec::with_capacity(raw.len());
    let mut steps = Vec::with_capacity(raw.len());
    let mut accumulators = Vec::with_capacity(raw.len());
    let mut objective_error = l2.map(|_| Vec::with_capacity(raw.len()));
    let mut acc = IntegralAccumulators::new(&schedule);
    let mut states = Vec::with_capacity(raw.len());
    for (t, flat, step) in raw {
        let state = SystemState::from_flat(n, m, &flat)?;
        let rec = record(problem, &schedule, t, &state, saddle)?;
        if let Some(prev) = records.last() {
            acc = accumulate(&acc, prev, &rec, &schedule)?;
        }
        if let (Some(p), Some(out)) = (l2, objective_error.as_mut()) {
            out.push(p.objective_error(&state.x, saddle.x())?);
        }
        records.push(rec);
        steps.push(step);
        accumulators.push(acc);
        states.push(state);
    }
    Ok(VariantRun {
        variant,
        schedule,
        records,
        steps,
        accumulators,
        objective_error,
        states,
        stats,
        failure,
    })
}

fn summarize(problem: &SaddleProblem, run: &VariantRun, window: (f64, f64)) -> VariantSummary {
    let last = run.records.last();
    let gaps = floor_for_log(run.records.iter().map(|r| r.gap));
    let series: Vec<(f64, f64)> = run.records.iter().map(|r| r.t).zip(gaps.iter().copied()).collect();
    let dist_set = match (problem.family(), run.final_state()) {
        (ProblemFamily::BilinearQuadratic(p), Some(s)) => Some(p.dist_to_solution_set(&s.x, &s.y)),
        _ => None,
    };
    VariantSummary {
        variant: run.variant,
        completed: run.completed(),
        failure: run.failure.as_ref().map(|e| e.to_string()),
        samples: run.records.len(),
        rate_fit: fit_rate(&series, window).ok(),
        oscillation: oscillation_metrics(&gaps).ok(),
        final_t: last.map(|r| r.t),
        final_gap: last.map(|r| r.gap),
        final_norm_z: last.map(|r| r.norm_z),
        final_dist_to_saddle: last.map(|r| r.dist_to_saddle),
        final_dist_to_solution_set: dist_set,
        final_objective_error: run.objective_error.as_ref().and_then(|v| v.last().copied()),
        accumulators: run.accumulators.last().copied(),
        stats: run.stats,
    }
}
