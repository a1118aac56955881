//! Strict TOML run configuration and its mapping onto [`ExperimentSpec`].

use std::fmt;
use std::path::{Path, PathBuf};

use saddle_flow::dynamics::{SolveStrategy, SystemState};
use saddle_flow::experiments::{EpsilonSpec, ExperimentSpec, ProblemSpec, ScheduleSpec, Variant};
use saddle_flow::integrator::{GridSpacing, IntegratorConfig};
use saddle_flow::problem::BilinearQuadraticParams;
use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

/// A configuration problem, reported against the dotted key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

/// A real number written either as a TOML number or as a `"p/q"` string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;
        impl Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a \"p/q\" fraction string")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                parse_real(v).map(Real).ok_or_else(|| E::custom(format!("cannot read {v:?} as a number")))
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

fn parse_real(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((p, q)) => Some(p.trim().parse::<f64>().ok()? / q.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    schedule: RawSchedule,
    time: RawTime,
    #[serde(default)]
    initial: Option<RawInitial>,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    variants: Option<Vec<Variant>>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Family {
    BilinearQuadratic,
    L2Regularized,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    family: Family,
    params: toml::Value,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BilinearParams {
    m: Real,
    n: Real,
    j: Real,
    k: Real,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct L2Params {
    n: usize,
    m: usize,
    omega: Real,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Case {
    Case1,
    Case2,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    case: Case,
    alpha: Option<Real>,
    beta_exp: Real,
    gamma: Real,
    epsilon: Option<RawEpsilon>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum EpsilonKind {
    Power,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEpsilon {
    kind: EpsilonKind,
    coef: Real,
    exponent: Real,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t0: Real,
    t_end: Real,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    x: Vec<Real>,
    y: Vec<Real>,
    vx: Vec<Real>,
    vy: Vec<Real>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    rtol: Option<Real>,
    atol: Option<Real>,
    samples: Option<usize>,
    h_init: Option<Real>,
    h_max: Option<Real>,
    max_steps: Option<usize>,
    spacing: Option<GridSpacing>,
    solver: Option<SolveStrategy>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
    svg: Option<PathBuf>,
}

/// Where a run writes its files. Relative paths are resolved by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    /// Stem for the per-variant CSV files: `trajectory.csv` becomes
    /// `trajectory_full.csv`, `trajectory_no_hessian.csv`, …
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: Option<PathBuf>,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self { csv: "trajectory.csv".into(), json: "summary.json".into(), svg: None }
    }
}

impl OutputPaths {
    pub fn resolve(&self, base: &Path) -> Self {
        Self {
            csv: base.join(&self.csv),
            json: base.join(&self.json),
            svg: self.svg.as_ref().map(|p| base.join(p)),
        }
    }

    pub fn variant_csv(&self, variant: Variant, partial: bool) -> PathBuf {
        let stem = self.csv.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        let suffix = if partial { ".partial.csv" } else { ".csv" };
        self.csv.with_file_name(format!("{stem}_{variant}{suffix}"))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub output: OutputPaths,
}

/// Command-line overrides applied on top of the file contents.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

pub fn load(path: &Path, overrides: Overrides) -> Result<RunConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, overrides).map_err(LoadError::Config)
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Config(ConfigError),
}

pub fn parse(text: &str, overrides: Overrides) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("", e.to_string().trim_end()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| from_path_error("", e))?;
    build(raw, overrides)
}

fn from_path_error<E: fmt::Display>(prefix: &str, e: serde_path_to_error::Error<E>) -> ConfigError {
    let path = e.path().to_string();
    let mut key = match (prefix, path.as_str()) {
        (p, ".") => p.to_string(),
        ("", q) => q.to_string(),
        (p, q) => format!("{p}.{q}"),
    };
    let message = e.inner().to_string();
    // toml prefixes its messages with a line/column excerpt; the field name
    // sits in backticks after "missing field" / "unknown field".
    let message = message.trim_end().to_string();
    for (needle, what) in [("missing field `", "missing key"), ("unknown field `", "unknown key")] {
        if let Some(start) = message.find(needle) {
            let rest = &message[start + needle.len()..];
            if let Some(end) = rest.find('`') {
                let field = &rest[..end];
                if key.rsplit('.').next() != Some(field) {
                    key = if key.is_empty() { field.to_string() } else { format!("{key}.{field}") };
                }
                let detail = if what == "unknown key" {
                    rest[end + 1..].trim_start_matches(',').trim().to_string()
                } else {
                    String::new()
                };
                let msg = if detail.is_empty() { what.to_string() } else { format!("{what}, {detail}") };
                return ConfigError::new(key, with_location(&message, msg));
            }
        }
    }
    ConfigError::new(key, message)
}

/// Keeps toml's "line N, column M" marker when present.
fn with_location(original: &str, msg: String) -> String {
    match original.find("line ") {
        Some(i) => {
            let loc: String = original[i..].chars().take_while(|c| *c != '\n').collect();
            format!("{msg} ({})", loc.trim_end_matches(|c: char| !c.is_ascii_digit()))
        }
        None => msg,
    }
}

fn finite(key: &str, v: Real) -> Result<f64, ConfigError> {
    if v.0.is_finite() {
        Ok(v.0)
    } else {
        Err(ConfigError::new(key, format!("must be finite, got {}", v.0)))
    }
}

fn finite_vec(key: &str, v: &[Real]) -> Result<Vec<f64>, ConfigError> {
    v.iter().enumerate().map(|(i, x)| finite(&format!("{key}[{i}]"), *x)).collect()
}

fn build(raw: RawConfig, overrides: Overrides) -> Result<RunConfig, ConfigError> {
    let seed = overrides.seed.or(raw.problem.seed);
    let problem = match raw.problem.family {
        Family::BilinearQuadratic => {
            let p: BilinearParams = serde_path_to_error::deserialize(raw.problem.params)
                .map_err(|e| from_path_error("problem.params", e))?;
            if raw.problem.seed.is_some() {
                return Err(ConfigError::new("problem.seed", "not used by family bilinear_quadratic"));
            }
            let params = BilinearQuadraticParams::new(
                finite("problem.params.m", p.m)?,
                finite("problem.params.n", p.n)?,
                finite("problem.params.j", p.j)?,
                finite("problem.params.k", p.k)?,
            )
            .map_err(|e| ConfigError::new("problem.params", e.to_string()))?;
            ProblemSpec::BilinearQuadratic(params)
        }
        Family::L2Regularized => {
            let p: L2Params = serde_path_to_error::deserialize(raw.problem.params)
                .map_err(|e| from_path_error("problem.params", e))?;
            let seed = seed.ok_or_else(|| ConfigError::new("problem.seed", "missing key"))?;
            let omega = finite("problem.params.omega", p.omega)?;
            if p.n == 0 || p.m == 0 {
                return Err(ConfigError::new("problem.params", "n and m must be positive"));
            }
            if omega <= 0.0 {
                return Err(ConfigError::new("problem.params.omega", format!("must be positive, got {omega}")));
            }
            ProblemSpec::L2Regularized { n: p.n, m: p.m, omega, seed }
        }
    };

    let s = &raw.schedule;
    let beta_exp = finite("schedule.beta_exp", s.beta_exp)?;
    let gamma = finite("schedule.gamma", s.gamma)?;
    let schedule = match s.case {
        Case::Case1 => {
            let alpha = finite(
                "schedule.alpha",
                s.alpha.ok_or_else(|| ConfigError::new("schedule.alpha", "missing key (required by case1)"))?,
            )?;
            let eps = s
                .epsilon
                .as_ref()
                .ok_or_else(|| ConfigError::new("schedule.epsilon", "missing key (required by case1)"))?;
            let epsilon = match eps.kind {
                EpsilonKind::Power => EpsilonSpec::Power {
                    coef: finite("schedule.epsilon.coef", eps.coef)?,
                    exponent: finite("schedule.epsilon.exponent", eps.exponent)?,
                },
            };
            ScheduleSpec::Case1 { alpha, beta_exp, gamma, epsilon }
        }
        Case::Case2 => {
            if s.alpha.is_some() {
                return Err(ConfigError::new("schedule.alpha", "not used by case2"));
            }
            if s.epsilon.is_some() {
                return Err(ConfigError::new("schedule.epsilon", "not used by case2 (its epsilon is fixed)"));
            }
            ScheduleSpec::Case2 { beta_exp, gamma }
        }
    };

    let t0 = finite("time.t0", raw.time.t0)?;
    let t_end = finite("time.t_end", raw.time.t_end)?;
    if t0 < 1.0 {
        return Err(ConfigError::new("time.t0", format!("must be >= 1, got {t0}")));
    }
    if t_end <= t0 {
        return Err(ConfigError::new("time.t_end", format!("must exceed t0 = {t0}, got {t_end}")));
    }

    let (n, m) = match &problem {
        ProblemSpec::BilinearQuadratic(_) => (2, 2),
        ProblemSpec::L2Regularized { n, m, .. } => (*n, *m),
    };
    let initial = match &raw.initial {
        None => SystemState::new(ones(n), ones(m), ones(n), ones(m)),
        Some(init) => {
            let x = finite_vec("initial.x", &init.x)?;
            let y = finite_vec("initial.y", &init.y)?;
            let vx = finite_vec("initial.vx", &init.vx)?;
            let vy = finite_vec("initial.vy", &init.vy)?;
            for (key, len, want) in [
                ("initial.x", x.len(), n),
                ("initial.y", y.len(), m),
                ("initial.vx", vx.len(), n),
                ("initial.vy", vy.len(), m),
            ] {
                if len != want {
                    return Err(ConfigError::new(key, format!("has {len} entries, the problem needs {want}")));
                }
            }
            SystemState::new(x.into(), y.into(), vx.into(), vy.into())
        }
    }
    .map_err(|e| ConfigError::new("initial", e.to_string()))?;

    let ri = &raw.integrator;
    let defaults = IntegratorConfig::default();
    let integrator = IntegratorConfig {
        rtol: ri.rtol.map(|v| finite("integrator.rtol", v)).transpose()?.unwrap_or(defaults.rtol),
        atol: ri.atol.map(|v| finite("integrator.atol", v)).transpose()?.unwrap_or(defaults.atol),
        h_init: ri.h_init.map(|v| finite("integrator.h_init", v)).transpose()?.unwrap_or(defaults.h_init),
        h_max: ri.h_max.map(|v| finite("integrator.h_max", v)).transpose()?.unwrap_or(defaults.h_max),
        max_steps: ri.max_steps.unwrap_or(defaults.max_steps),
        sample_count: overrides.samples.or(ri.samples).unwrap_or(defaults.sample_count),
        spacing: ri.spacing.unwrap_or(defaults.spacing),
    };
    integrator.validate().map_err(|e| ConfigError::new("integrator", e.to_string()))?;

    let variants = raw.variants.clone().unwrap_or_else(|| vec![Variant::Full]);
    if variants.is_empty() {
        return Err(ConfigError::new("variants", "must name at least one variant"));
    }

    let output = OutputPaths {
        csv: raw.output.csv.unwrap_or_else(|| OutputPaths::default().csv),
        json: raw.output.json.unwrap_or_else(|| OutputPaths::default().json),
        svg: raw.output.svg,
    };

    Ok(RunConfig {
        spec: ExperimentSpec {
            problem,
            schedule,
            t0,
            t_end,
            initial,
            variants,
            integrator,
            solve: ri.solver.unwrap_or_default(),
            rate_window: None,
        },
        output,
    })
}

fn ones(n: usize) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_element(n, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
variants = ["full", "no_hessian"]

[problem]
family = "bilinear_quadratic"
params = { m = 1, n = 6, j = 4, k = 10 }

[schedule]
case = "case1"
alpha = 19
beta_exp = 1
gamma = "2/15"
epsilon = { kind = "power", coef = 2, exponent = -2 }

[time]
t0 = 1
t_end = 30

[initial]
x = [1, 1.5]
y = [1, 1.5]
vx = [1, 1]
vy = [1, 1]
"#;

    #[test]
    fn parses_example() {
        let c = parse(EXAMPLE, Overrides::default()).unwrap();
        assert_eq!(c.spec.variants, vec![Variant::Full, Variant::NoHessian]);
        match c.spec.schedule {
            ScheduleSpec::Case1 { gamma, .. } => assert_eq!(gamma, 2.0 / 15.0),
            _ => panic!(),
        }
        assert_eq!(c.spec.initial.x[1], 1.5);
        assert_eq!(c.output, OutputPaths::default());
    }

    #[test]
    fn missing_key_is_named() {
        let text = EXAMPLE.replace("gamma = \"2/15\"\n", "");
        let e = parse(&text, Overrides::default()).unwrap_err();
        assert_eq!(e.key, "schedule.gamma");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = EXAMPLE.replace("beta_exp = 1", "beta_exp = 1\ngama = 1");
        let e = parse(&text, Overrides::default()).unwrap_err();
        assert_eq!(e.key, "schedule.gama");
        let text = EXAMPLE.replace("k = 10 }", "k = 10, q = 2 }");
        assert_eq!(parse(&text, Overrides::default()).unwrap_err().key, "problem.params.q");
    }

    #[test]
    fn non_finite_rejected() {
        let text = EXAMPLE.replace("t_end = 30", "t_end = inf");
        assert_eq!(parse(&text, Overrides::default()).unwrap_err().key, "time.t_end");
        let text = EXAMPLE.replace("x = [1, 1.5]", "x = [1, nan]");
        assert_eq!(parse(&text, Overrides::default()).unwrap_err().key, "initial.x[1]");
    }

    #[test]
    fn wrong_type_is_named() {
        let text = EXAMPLE.replace("t0 = 1\n", "t0 = \"one\"\n");
        assert_eq!(parse(&text, Overrides::default()).unwrap_err().key, "time.t0");
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
[problem]
family = "l2_regularized"
params = { n = 4, m = 2, omega = 1 }
seed = 3
[schedule]
case = "case2"
beta_exp = 0
gamma = 0.5
[time]
t0 = 1
t_end = 5
[integrator]
samples = 10
"#;
        let c = parse(text, Overrides { seed: Some(9), samples: Some(20) }).unwrap();
        assert_eq!(c.spec.problem, ProblemSpec::L2Regularized { n: 4, m: 2, omega: 1.0, seed: 9 });
        assert_eq!(c.spec.integrator.sample_count, 20);
        assert_eq!(c.spec.initial.y.len(), 2);
    }

    #[test]
    fn variant_file_names() {
        let o = OutputPaths::default().resolve(Path::new("/tmp/run"));
        assert_eq!(o.variant_csv(Variant::NoHessian, false), Path::new("/tmp/run/trajectory_no_hessian.csv"));
        assert_eq!(o.variant_csv(Variant::Full, true), Path::new("/tmp/run/trajectory_full.partial.csv"));
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_real("2/15"), Some(2.0 / 15.0));
        assert_eq!(parse_real(" 0.5 "), Some(0.5));
        assert_eq!(parse_real("x"), None);
    }
}
