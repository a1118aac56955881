//! Time-varying coefficients `α(t)`, `β(t)`, `γ(t)`, `ε(t)` and the
//! extrapolation constant `θ`, with admissibility checks.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute slack for the inequality conditions.
pub const CONDITION_SLACK: f64 = 1e-9;
/// Relative tolerance for the equality condition on `α`.
pub const EQUALITY_RTOL: f64 = 1e-9;

type EvalFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// A scalar function of time returning `(value, derivative)`.
#[derive(Clone)]
pub struct TimeFn {
    eval: Arc<EvalFn>,
    identically_zero: bool,
    label: String,
}

impl TimeFn {
    pub fn from_fn(label: impl Into<String>, f: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            identically_zero: false,
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self {
            eval: Arc::new(|_| (0.0, 0.0)),
            identically_zero: true,
            label: "0".into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Self::zero();
        }
        Self::from_fn(format!("{c}"), move |_| (c, 0.0))
    }

    /// `coef · t^exponent`
    pub fn power(coef: f64, exponent: f64) -> Self {
        if coef == 0.0 {
            return Self::zero();
        }
        if exponent == 0.0 {
            return Self::constant(coef);
        }
        Self::from_fn(format!("{coef}*t^{exponent}"), move |t| {
            let v = coef * t.powf(exponent);
            (v, exponent * v / t)
        })
    }

    pub fn sum(self, other: TimeFn) -> Self {
        if self.identically_zero {
            return other;
        }
        if other.identically_zero {
            return self;
        }
        let label = format!("{} + {}", self.label, other.label);
        let (a, b) = (self.eval, other.eval);
        Self::from_fn(label, move |t| {
            let (va, da) = a(t);
            let (vb, db) = b(t);
            (va + vb, da + db)
        })
    }

    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64) {
        (self.eval)(t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn is_zero(&self) -> bool {
        self.identically_zero
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeFn({})", self.label)
    }
}

/// All coefficients and their derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub t: f64,
    pub theta: f64,
    pub alpha: f64,
    pub alpha_dot: f64,
    pub beta: f64,
    pub beta_dot: f64,
    pub gamma: f64,
    pub gamma_dot: f64,
    pub eps: f64,
    pub eps_dot: f64,
}

impl Coefficients {
    /// `γ(t) + t γ̇(t)`
    pub fn gamma_growth(&self) -> f64 {
        self.gamma + self.t * self.gamma_dot
    }

    /// `t β(t) − γ(t) − t γ̇(t)`
    pub fn damping_gap(&self) -> f64 {
        self.t * self.beta - self.gamma_growth()
    }
}

#[derive(Debug, Clone)]
pub struct Schedule {
    theta: f64,
    t0: f64,
    alpha: TimeFn,
    beta: TimeFn,
    gamma: TimeFn,
    epsilon: TimeFn,
}

impl Schedule {
    /// Wraps arbitrary coefficient functions. Admissibility is checked
    /// separately by [`Schedule::validate`].
    pub fn custom(
        theta: f64,
        alpha: TimeFn,
        beta: TimeFn,
        gamma: TimeFn,
        epsilon: TimeFn,
        t0: f64,
    ) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Construction(format!("theta must be positive, got {theta}")));
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::Construction(format!("t0 must be positive, got {t0}")));
        }
        Ok(Self { theta, t0, alpha, beta, gamma, epsilon })
    }

    /// Power-law family `α(t) = α/t`, `β(t) = t^β`, `γ(t) = γ t^(β+1)` with
    /// `θ = 1/((α − β − 3)(1 − γβ − 2γ))` and a caller-chosen `ε`.
    pub fn case1(
        alpha_c: f64,
        beta_exp: f64,
        gamma_c: f64,
        epsilon: TimeFn,
        t0: f64,
    ) -> Result<Self> {
        finite_args(&[("alpha", alpha_c), ("beta_exp", beta_exp), ("gamma", gamma_c), ("t0", t0)])?;
        if beta_exp < 0.0 {
            return Err(Error::Construction(format!("beta_exp must be >= 0, got {beta_exp}")));
        }
        if alpha_c <= 2.0 * beta_exp + 5.0 {
            return Err(Error::Construction(format!(
                "alpha must exceed 2*beta_exp + 5 = {}, got {alpha_c}",
                2.0 * beta_exp + 5.0
            )));
        }
        let bound = case1_gamma_bound(alpha_c, beta_exp);
        check_gamma(gamma_c, bound)?;
        check_t0(t0)?;
        let theta = 1.0 / ((alpha_c - beta_exp - 3.0) * (1.0 - gamma_c * beta_exp - 2.0 * gamma_c));
        Self::custom(
            theta,
            TimeFn::power(alpha_c, -1.0),
            TimeFn::power(1.0, beta_exp),
            TimeFn::power(gamma_c, beta_exp + 1.0),
            epsilon,
            t0,
        )
    }

    /// Family with `α(t)·t` slowly varying and
    /// `ε(t) = 4(β+2)² / ((2 − 2γ − γβ) t^(β+3))`.
    pub fn case2(gamma_c: f64, beta_exp: f64, t0: f64) -> Result<Self> {
        finite_args(&[("gamma", gamma_c), ("beta_exp", beta_exp), ("t0", t0)])?;
        if beta_exp < 0.0 {
            return Err(Error::Construction(format!("beta_exp must be >= 0, got {beta_exp}")));
        }
        check_gamma(gamma_c, 1.0 / (beta_exp + 2.0))?;
        check_t0(t0)?;
        let b = beta_exp;
        let denom = 2.0 - 2.0 * gamma_c - gamma_c * b;
        let theta = gamma_c / denom;

        // (β+1) t^(β+2) − 2 over t^(β+3) + 2t
        let ratio = TimeFn::from_fn(
            format!("((({b})+1)*t^({b}+2) - 2)/(t^({b}+3) + 2t)"),
            move |t| {
                let p = (b + 1.0) * t.powf(b + 2.0) - 2.0;
                let dp = (b + 1.0) * (b + 2.0) * t.powf(b + 1.0);
                let q = t.powf(b + 3.0) + 2.0 * t;
                let dq = (b + 3.0) * t.powf(b + 2.0) + 2.0;
                (p / q, (dp * q - p * dq) / (q * q))
            },
        );
        let alpha = TimeFn::power((2.0 + 2.0 * gamma_c) / gamma_c, -1.0).sum(ratio);
        let gamma = TimeFn::power(gamma_c, -1.0).sum(TimeFn::power(gamma_c / 2.0, b + 1.0));
        let epsilon = TimeFn::power(4.0 * (b + 2.0).powi(2) / denom, -(b + 3.0));
        Self::custom(theta, alpha, TimeFn::power(1.0, b), gamma, epsilon, t0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn alpha(&self) -> &TimeFn {
        &self.alpha
    }
    pub fn beta(&self) -> &TimeFn {
        &self.beta
    }
    pub fn gamma(&self) -> &TimeFn {
        &self.gamma
    }
    pub fn epsilon(&self) -> &TimeFn {
        &self.epsilon
    }

    /// `true` when Hessian-driven damping is switched off (`γ ≡ 0`).
    pub fn is_hessian_free(&self) -> bool {
        self.gamma.is_zero()
    }

    pub fn at(&self, t: f64) -> Result<Coefficients> {
        if !(t >= self.t0) {
            return Err(Error::Domain { t, t0: self.t0 });
        }
        Ok(self.at_unchecked(t))
    }

    pub(crate) fn at_unchecked(&self, t: f64) -> Coefficients {
        let (alpha, alpha_dot) = self.alpha.eval(t);
        let (beta, beta_dot) = self.beta.eval(t);
        let (gamma, gamma_dot) = self.gamma.eval(t);
        let (eps, eps_dot) = self.epsilon.eval(t);
        Coefficients {
            t,
            theta: self.theta,
            alpha,
            alpha_dot,
            beta,
            beta_dot,
            gamma,
            gamma_dot,
            eps,
            eps_dot,
        }
    }

    /// Copy with `γ ≡ 0` and/or `ε ≡ 0`; `θ` and the remaining coefficients
    /// are kept so that comparisons run at matched extrapolation.
    pub fn ablation_variant(&self, drop_hessian: bool, drop_tikhonov: bool) -> Self {
        let mut s = self.clone();
        if drop_hessian {
            s.gamma = TimeFn::zero();
        }
        if drop_tikhonov {
            s.epsilon = TimeFn::zero();
        }
        s
    }

    /// Checks the admissibility conditions at every grid point.
    ///
    /// The eigenvalue exclusion `γ²θ²t² ∉ {−1/σᵢ}` is recorded as satisfied:
    /// `K*K` and `KK*` have nonnegative spectra, so `1 + c²σ ≥ 1` for every
    /// real `c`.
    pub fn validate(&self, grid: &[f64]) -> Result<ValidationReport> {
        if grid.is_empty() {
            return Err(Error::Argument("validation grid is empty".into()));
        }
        if let Some(&t) = grid.iter().find(|&&t| !(t >= self.t0) || !t.is_finite()) {
            return Err(Error::Argument(format!(
                "grid point {t} is not a finite time >= t0 = {}",
                self.t0
            )));
        }
        let hessian_free = self.is_hessian_free();
        let mut report = ValidationReport {
            grid: grid.to_vec(),
            damping_window: Check::new(),
            alpha_identity: if hessian_free { Check::not_applicable() } else { Check::new() },
            beta_growth: Check::new(),
            alpha_tikhonov: if hessian_free { Check::not_applicable() } else { Check::new() },
            trajectory_bound: BoundCheck {
                status: if hessian_free { Status::NotApplicable } else { Status::Pass },
                witnessed_d: None,
            },
            epsilon_monotone: Check::new(),
            beta_positive: Check::new(),
            eigenvalue_exclusion: true,
            worst_violation: None,
        };

        let theta = self.theta;
        for &t in grid {
            let c = self.at_unchecked(t);
            let growth = c.gamma_growth();
            let gap = c.damping_gap();

            // 0 <= γ + tγ̇ < tβ
            let v1 = (-growth).max(growth - t * c.beta);
            report.record(ConditionId::DampingWindow, t, v1, v1 > CONDITION_SLACK);

            // β̇/β <= (1 − 2θ)/(θt)
            let v3 = c.beta_dot / c.beta - (1.0 - 2.0 * theta) / (theta * t);
            report.record(ConditionId::BetaGrowth, t, v3, v3 > CONDITION_SLACK);

            let veps = (-c.eps).max(c.eps_dot);
            report.record(ConditionId::EpsilonMonotone, t, veps, veps > CONDITION_SLACK);

            report.record(ConditionId::BetaPositive, t, -c.beta, !(c.beta > 0.0));

            if hessian_free {
                continue;
            }

            // α = β/(θ(tβ − γ − tγ̇)) + γ̇/γ + 2/t
            let rhs = c.beta / (theta * gap) + c.gamma_dot / c.gamma + 2.0 / t;
            let rel = (c.alpha - rhs).abs() / c.alpha.abs().max(f64::MIN_POSITIVE);
            let rel = if rel.is_finite() { rel } else { f64::INFINITY };
            report.record(ConditionId::AlphaIdentity, t, rel - EQUALITY_RTOL, rel > EQUALITY_RTOL);

            // α + tα̇ <= (tβ − γ − tγ̇) ε
            let v4 = c.alpha + t * c.alpha_dot - gap * c.eps;
            report.record(ConditionId::AlphaTikhonov, t, v4, v4 > CONDITION_SLACK);

            let q = t * c.beta * growth / (c.gamma * gap);
            let q = if q.is_finite() { q } else { f64::NEG_INFINITY };
            let d = report.trajectory_bound.witnessed_d.map_or(q, |d| d.min(q));
            report.trajectory_bound.witnessed_d = Some(d);
            if !(q > 0.0) || !(gap > 0.0) {
                report.trajectory_bound.status = Status::Fail;
                report.note_violation(ConditionId::TrajectoryBound, t, if q.is_finite() { -q } else { f64::INFINITY });
            }
        }
        Ok(report)
    }
}

fn finite_args(args: &[(&str, f64)]) -> Result<()> {
    for (name, v) in args {
        if !v.is_finite() {
            return Err(Error::Construction(format!("{name} must be finite, got {v}")));
        }
    }
    Ok(())
}

fn check_t0(t0: f64) -> Result<()> {
    if t0 < 1.0 {
        return Err(Error::Construction(format!("t0 must be >= 1, got {t0}")));
    }
    Ok(())
}

fn check_gamma(gamma_c: f64, bound: f64) -> Result<()> {
    if !(gamma_c > 0.0) || gamma_c > bound * (1.0 + 1e-12) {
        return Err(Error::Construction(format!(
            "gamma must lie in (0, {bound}], got {gamma_c}"
        )));
    }
    Ok(())
}

/// Largest admissible `γ` for [`Schedule::case1`]:
/// `(1/(β+2)) (1 − (β+2)/(α−β−3))`.
pub fn case1_gamma_bound(alpha_c: f64, beta_exp: f64) -> f64 {
    (1.0 / (beta_exp + 2.0)) * (1.0 - (beta_exp + 2.0) / (alpha_c - beta_exp - 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    /// Passing or not applicable.
    pub fn ok(self) -> bool {
        self != Status::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    /// `0 <= γ + tγ̇ < tβ`
    DampingWindow,
    /// `α = β/(θ(tβ−γ−tγ̇)) + γ̇/γ + 2/t`
    AlphaIdentity,
    /// `β̇/β <= (1−2θ)/(θt)`
    BetaGrowth,
    /// `α + tα̇ <= (tβ−γ−tγ̇) ε`
    AlphaTikhonov,
    /// `tβ(γ+tγ̇) / (γ(tβ−γ−tγ̇)) >= D > 0`
    TrajectoryBound,
    EpsilonMonotone,
    BetaPositive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub status: Status,
    /// Largest signed violation seen (negative means satisfied with margin).
    pub worst_margin: Option<f64>,
}

impl Check {
    fn new() -> Self {
        Self { status: Status::Pass, worst_margin: None }
    }
    fn not_applicable() -> Self {
        Self { status: Status::NotApplicable, worst_margin: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub status: Status,
    /// Infimum of the bound quotient over the grid.
    pub witnessed_d: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Violation {
    pub condition: ConditionId,
    pub t: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub grid: Vec<f64>,
    pub damping_window: Check,
    pub alpha_identity: Check,
    pub beta_growth: Check,
    pub alpha_tikhonov: Check,
    pub trajectory_bound: BoundCheck,
    pub epsilon_monotone: Check,
    pub beta_positive: Check,
    pub eigenvalue_exclusion: bool,
    pub worst_violation: Option<Violation>,
}

impl ValidationReport {
    fn check_mut(&mut self, id: ConditionId) -> &mut Check {
        match id {
            ConditionId::DampingWindow => &mut self.damping_window,
            ConditionId::AlphaIdentity => &mut self.alpha_identity,
            ConditionId::BetaGrowth => &mut self.beta_growth,
            ConditionId::AlphaTikhonov => &mut self.alpha_tikhonov,
            ConditionId::EpsilonMonotone => &mut self.epsilon_monotone,
            ConditionId::BetaPositive => &mut self.beta_positive,
            ConditionId::TrajectoryBound => unreachable!("bound check has its own record"),
        }
    }

    fn record(&mut self, id: ConditionId, t: f64, margin: f64, violated: bool) {
        let margin = if margin.is_nan() { f64::INFINITY } else { margin };
        let check = self.check_mut(id);
        check.worst_margin = Some(check.worst_margin.map_or(margin, |w| w.max(margin)));
        if violated {
            check.status = Status::Fail;
            self.note_violation(id, t, margin);
        }
    }

    fn note_violation(&mut self, condition: ConditionId, t: f64, magnitude: f64) {
        if self.worst_violation.is_none_or(|w| magnitude > w.magnitude) {
            self.worst_violation = Some(Violation { condition, t, magnitude });
        }
    }

    /// Every applicable condition holds on the grid.
    pub fn all_ok(&self) -> bool {
        [
            self.damping_window.status,
            self.alpha_identity.status,
            self.beta_growth.status,
            self.alpha_tikhonov.status,
            self.trajectory_bound.status,
            self.epsilon_monotone.status,
            self.beta_positive.status,
        ]
        .iter()
        .all(|s| s.ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64).collect()
    }

    fn eps_power(c: f64, p: f64) -> TimeFn {
        TimeFn::power(c, -p)
    }

    #[test]
    fn case1_theta_values() {
        let s = Schedule::case1(19.0, 1.0, 2.0 / 15.0, eps_power(2.0, 2.0), 1.0).unwrap();
        assert_relative_eq!(s.theta(), 1.0 / 9.0, epsilon = 1e-15);
        let s = Schedule::case1(19.0, 1.0, 1.0 / 6.0, eps_power(1.0, 8.0), 1.0).unwrap();
        assert_relative_eq!(s.theta(), 2.0 / 15.0, epsilon = 1e-15);
    }

    #[test]
    fn case1_rejections_name_the_bound() {
        assert_relative_eq!(case1_gamma_bound(19.0, 1.0), 4.0 / 15.0, epsilon = 1e-15);
        let err = Schedule::case1(19.0, 1.0, 0.3, TimeFn::zero(), 1.0).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        assert!(Schedule::case1(19.0, 1.0, 4.0 / 15.0, TimeFn::zero(), 1.0).is_ok());
        assert!(Schedule::case1(19.0, 1.0, 0.0, TimeFn::zero(), 1.0).is_err());
        assert!(Schedule::case1(7.0, 1.0, 0.01, TimeFn::zero(), 1.0).is_err());
        assert!(Schedule::case1(19.0, -0.5, 0.1, TimeFn::zero(), 1.0).is_err());
        assert!(Schedule::case1(19.0, 1.0, 0.1, TimeFn::zero(), 0.5).is_err());
        assert!(Schedule::case1(f64::NAN, 1.0, 0.1, TimeFn::zero(), 1.0).is_err());
    }

    #[test]
    fn case2_values_and_rejections() {
        let s = Schedule::case2(1.0 / 3.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(s.theta(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(s.epsilon().value(1.0), 12.0, epsilon = 1e-13);
        assert!(Schedule::case2(0.5, 0.0, 1.0).is_ok());
        assert!(Schedule::case2(1.0, 0.0, 1.0).is_err());
        assert!(Schedule::case2(-0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn case2_alpha_matches_formula() {
        let (g, b) = (0.2, 1.0);
        let s = Schedule::case2(g, b, 1.0).unwrap();
        for t in [1.0, 2.5, 7.0] {
            let expected = (2.0 + 2.0 * g) / (g * t)
                + ((b + 1.0) * t.powf(b + 2.0) - 2.0) / (t.powf(b + 3.0) + 2.0 * t);
            assert_relative_eq!(s.alpha().value(t), expected, max_relative = 1e-14);
            let gamma = g / t + 0.5 * g * t.powf(b + 1.0);
            assert_relative_eq!(s.gamma().value(t), gamma, max_relative = 1e-14);
        }
    }

    #[test]
    fn custom_schedule_wraps_and_rejects() {
        let c1 = Schedule::case1(19.0, 1.0, 1.0 / 6.0, eps_power(2.0, 2.0), 1.0).unwrap();
        let wrapped = Schedule::custom(
            c1.theta(),
            c1.alpha().clone(),
            c1.beta().clone(),
            c1.gamma().clone(),
            c1.epsilon().clone(),
            1.0,
        )
        .unwrap();
        for t in [1.0, 3.0, 11.0] {
            assert_eq!(wrapped.at(t).unwrap(), c1.at(t).unwrap());
        }
        assert!(Schedule::custom(0.5, TimeFn::constant(1.0), TimeFn::constant(1.0), TimeFn::zero(), TimeFn::zero(), 1.0).is_ok());
        assert!(Schedule::custom(0.0, TimeFn::zero(), TimeFn::constant(1.0), TimeFn::zero(), TimeFn::zero(), 1.0).is_err());
        assert!(Schedule::custom(0.3, TimeFn::zero(), TimeFn::constant(1.0), TimeFn::zero(), TimeFn::zero(), 0.0).is_err());
    }

    #[test]
    fn domain_error_before_t0() {
        let s = Schedule::case2(0.3, 1.0, 2.0).unwrap();
        assert!(matches!(s.at(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn validate_case1_on_integer_grid() {
        let s = Schedule::case1(19.0, 1.0, 1.0 / 6.0, eps_power(2.0, 2.0), 1.0).unwrap();
        let report = s.validate(&grid(100)).unwrap();
        assert!(report.all_ok(), "{report:?}");
        assert!(report.worst_violation.is_none());
        // γ + tγ̇ = 0.5 t² against tβ = t²
        let c = s.at(4.0).unwrap();
        assert_relative_eq!(c.gamma_growth(), 8.0, epsilon = 1e-12);
        assert_eq!(c.t * c.beta, 16.0);
    }

    #[test]
    fn validate_case1_alpha_tikhonov_margin() {
        let s = Schedule::case1(19.0, 1.0, 2.0 / 15.0, eps_power(2.0, 2.0), 1.0).unwrap();
        for t in [1.0, 5.0, 50.0] {
            let c = s.at(t).unwrap();
            assert!((c.alpha + t * c.alpha_dot).abs() < 1e-14);
            assert!(c.damping_gap() * c.eps > 0.0);
        }
        assert!(s.validate(&grid(100)).unwrap().alpha_tikhonov.status == Status::Pass);
    }

    #[test]
    fn validate_detects_fast_beta_growth() {
        let s = Schedule::custom(
            1.0 / 3.0,
            TimeFn::power(19.0, -1.0),
            TimeFn::power(1.0, 3.0),
            TimeFn::zero(),
            TimeFn::zero(),
            1.0,
        )
        .unwrap();
        let report = s.validate(&grid(10)).unwrap();
        assert_eq!(report.beta_growth.status, Status::Fail);
        assert!(!report.all_ok());
        let w = report.worst_violation.unwrap();
        assert_eq!(w.condition, ConditionId::BetaGrowth);
        // 3/t − 1/t is largest at t = 1
        assert_eq!(w.t, 1.0);
        assert_relative_eq!(w.magnitude, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn hessian_free_marks_conditions_not_applicable() {
        let s = Schedule::case1(19.0, 1.0, 2.0 / 15.0, eps_power(2.0, 2.0), 1.0)
            .unwrap()
            .ablation_variant(true, false);
        let report = s.validate(&grid(30)).unwrap();
        assert_eq!(report.alpha_identity.status, Status::NotApplicable);
        assert_eq!(report.trajectory_bound.status, Status::NotApplicable);
        assert_eq!(report.damping_window.status, Status::Pass);
        assert!(report.all_ok());
    }

    #[test]
    fn validate_rejects_empty_or_early_grid() {
        let s = Schedule::case2(0.3, 1.0, 1.0).unwrap();
        assert!(matches!(s.validate(&[]), Err(Error::Argument(_))));
        assert!(s.validate(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn ablations() {
        let s = Schedule::case1(19.0, 1.0, 2.0 / 15.0, eps_power(2.0, 2.0), 1.0).unwrap();
        let same = s.ablation_variant(false, false);
        for t in [1.0, 2.0, 29.0] {
            assert_eq!(same.at(t).unwrap(), s.at(t).unwrap());
        }
        let nh = s.ablation_variant(true, false);
        assert!(nh.is_hessian_free());
        assert_eq!(nh.at(3.0).unwrap().gamma, 0.0);
        assert_relative_eq!(nh.theta(), 1.0 / 9.0, epsilon = 1e-15);
        let both = s.ablation_variant(true, true);
        let c = both.at(5.0).unwrap();
        assert_eq!((c.gamma, c.gamma_dot, c.eps, c.eps_dot), (0.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(c.theta * c.t, 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn case2_validates() {
        for (g, b) in [(0.5, 0.0), (1.0 / 3.0, 0.0), (0.2, 1.0), (1.0 / 3.0, 1.0)] {
            let s = Schedule::case2(g, b, 1.0).unwrap();
            let report = s.validate(&grid(100)).unwrap();
            assert!(report.all_ok(), "gamma={g} beta={b}: {report:?}");
        }
    }
}
