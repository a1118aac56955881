//! Per-sample diagnostics, Lyapunov energies, integral accumulators, rate fits
//! and oscillation metrics.

use nalgebra::DVector;
use serde::Serialize;

use crate::dynamics::SystemState;
use crate::error::{Error, Result};
use crate::problem::SaddleProblem;
use crate::schedule::{Coefficients, Schedule};

/// Residual tolerance for accepting a candidate saddle point.
pub const SADDLE_TOL: f64 = 1e-8;
/// Values below this are floored before any log-domain operation.
pub const GAP_FLOOR: f64 = 1e-14;
/// Relative drop a local maximum must show before the next rise.
pub const MAXIMUM_THRESHOLD: f64 = 1e-3;

/// A point verified to satisfy the first-order saddle conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSaddle {
    x: DVector<f64>,
    y: DVector<f64>,
}

impl ReferenceSaddle {
    pub fn new(p: &SaddleProblem, x: DVector<f64>, y: DVector<f64>) -> Result<Self> {
        let (rx, ry) = p.optimality_residuals(&x, &y)?;
        if !(rx <= SADDLE_TOL && ry <= SADDLE_TOL) {
            return Err(Error::Argument(format!(
                "not a saddle point: residuals ({rx:e}, {ry:e}) exceed {SADDLE_TOL:e}"
            )));
        }
        Ok(Self { x, y })
    }

    /// Minimal-norm saddle of a built-in problem family.
    pub fn for_problem(p: &SaddleProblem) -> Result<Self> {
        let (x, y) = p.reference_saddle()?;
        Self::new(p, x, y)
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    fn check(&self, p: &SaddleProblem) -> Result<()> {
        if self.x.len() != p.n() || self.y.len() != p.m() {
            return Err(Error::Argument(format!(
                "saddle has dims ({}, {}), problem has ({}, {})",
                self.x.len(),
                self.y.len(),
                p.n(),
                p.m()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub gap: f64,
    pub grad_f_res: f64,
    pub grad_g_res: f64,
    pub delta: f64,
    pub res_x: f64,
    pub res_y: f64,
    /// `None` when the energy is undefined (γ ≡ 0 or a degenerate damping window).
    pub energy_e: Option<f64>,
    pub energy_ebar: Option<f64>,
    pub norm_z: f64,
    pub dist_to_saddle: f64,
    /// ‖ẋ‖² + ‖ẏ‖²
    pub kinetic: f64,
}

impl DiagnosticsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.gap,
            self.grad_f_res,
            self.grad_g_res,
            self.delta,
            self.res_x,
            self.res_y,
            self.norm_z,
            self.dist_to_saddle,
            self.kinetic,
        ]
        .iter()
        .chain(self.energy_e.iter())
        .chain(self.energy_ebar.iter())
        .all(|v| v.is_finite())
    }
}

/// Primal-dual gap 𝓛(x, y*) − 𝓛(x*, y).
pub fn gap(p: &SaddleProblem, x: &DVector<f64>, y: &DVector<f64>, saddle: &ReferenceSaddle) -> Result<f64> {
    saddle.check(p)?;
    Ok(p.lagrangian(x, saddle.y())? - p.lagrangian(saddle.x(), y)?)
}

struct Extrapolated {
    gx: DVector<f64>,
    gy: DVector<f64>,
}

fn extrapolated_gradients(p: &SaddleProblem, c: &Coefficients, st: &SystemState) -> Extrapolated {
    let shift = c.theta * c.t;
    let y_ext = &st.y + &st.vy * shift;
    let x_ext = &st.x + &st.vx * shift;
    Extrapolated {
        gx: p.grad_x_aug_unchecked(&st.x, &y_ext, c.eps),
        gy: p.grad_y_aug_unchecked(&x_ext, &st.y, c.eps),
    }
}

pub fn record(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
    saddle: &ReferenceSaddle,
) -> Result<DiagnosticsRecord> {
    let c = s.at(t)?;
    p.check_xy(&state.x, &state.y)?;
    p.check_xy(&state.vx, &state.vy)?;
    saddle.check(p)?;
    let g = extrapolated_gradients(p, &c, state);
    let dx = &state.x - saddle.x();
    let dy = &state.y - saddle.y();
    let res_x = (&state.vx + &g.gx * c.gamma).norm();
    let res_y = (&state.vy - &g.gy * c.gamma).norm();
    Ok(DiagnosticsRecord {
        t,
        gap: gap(p, &state.x, &state.y, saddle)?,
        grad_f_res: (p.f_grad(&state.x) - p.f_grad(saddle.x())).norm(),
        grad_g_res: (p.g_grad(&state.y) - p.g_grad(saddle.y())).norm(),
        delta: g.gx.norm_squared() + g.gy.norm_squared(),
        res_x,
        res_y,
        energy_e: energy_e(p, s, t, state, saddle)?,
        energy_ebar: energy_ebar(p, s, t, state, saddle)?,
        norm_z: (state.x.norm_squared() + state.y.norm_squared()).sqrt(),
        dist_to_saddle: (dx.norm_squared() + dy.norm_squared()).sqrt(),
        kinetic: state.vx.norm_squared() + state.vy.norm_squared(),
    })
}

/// The weights (η, n) of the time-weighted energy, `None` where undefined.
pub fn energy_weights(c: &Coefficients) -> Option<(f64, f64)> {
    let d = c.damping_gap();
    if !(c.gamma > 0.0 && d > 0.0) {
        return None;
    }
    let tb = c.t * c.beta;
    let eta = tb / (c.theta * d);
    let n = tb * c.gamma_growth() / (c.theta * c.gamma * d);
    Some((eta, n))
}

fn energy_terms(
    p: &SaddleProblem,
    c: &Coefficients,
    state: &SystemState,
    saddle: &ReferenceSaddle,
    t_weight: f64,
    eta: f64,
    n: f64,
) -> Result<f64> {
    let g = extrapolated_gradients(p, c, state);
    let gp = gap(p, &state.x, &state.y, saddle)?;
    let dx = &state.x - saddle.x();
    let dy = &state.y - saddle.y();
    let e1 = t_weight * t_weight * c.beta * (gp + 0.5 * c.eps * (state.x.norm_squared() + state.y.norm_squared()));
    let e2 = 0.5 * (&dx * eta + (&state.vx + &g.gx * c.gamma) * t_weight).norm_squared()
        + 0.5 * n * dx.norm_squared();
    let e3 = 0.5 * (&dy * eta + (&state.vy - &g.gy * c.gamma) * t_weight).norm_squared()
        + 0.5 * n * dy.norm_squared();
    Ok(e1 + e2 + e3)
}

/// 𝓔(t) with weights t²β on the gap and t on the velocity term.
pub fn energy_e(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
    saddle: &ReferenceSaddle,
) -> Result<Option<f64>> {
    let c = s.at(t)?;
    saddle.check(p)?;
    match energy_weights(&c) {
        None => Ok(None),
        Some((eta, n)) => energy_terms(p, &c, state, saddle, t, eta, n).map(Some),
    }
}

/// 𝓔̄(t): the same construction with the weights divided by t.
pub fn energy_ebar(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
    saddle: &ReferenceSaddle,
) -> Result<Option<f64>> {
    let c = s.at(t)?;
    saddle.check(p)?;
    match energy_weights(&c) {
        None => Ok(None),
        Some((eta, n)) => energy_terms(p, &c, state, saddle, 1.0, eta / t, n / (t * t)).map(Some),
    }
}

/// Slacks of the two strong convexity/concavity inequalities at the sample
/// (`RHS − LHS` for x, `LHS − RHS` for y). Both are nonnegative up to round-off.
pub fn check_prop1(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
    saddle: &ReferenceSaddle,
) -> Result<(f64, f64)> {
    let eps = s.at(t)?.eps;
    saddle.check(p)?;
    p.check_xy(&state.x, &state.y)?;
    let (xs, ys) = (saddle.x(), saddle.y());
    let (x, y) = (&state.x, &state.y);
    let l_star = p.lagrangian(xs, ys)?;

    let lhs_x = p.grad_x_aug(x, ys, eps)?.dot(&(xs - x));
    let rhs_x = l_star - p.lagrangian(x, ys)?
        + 0.5 * eps * (xs.norm_squared() - x.norm_squared() - (x - xs).norm_squared());
    let lhs_y = p.grad_y_aug(xs, y, eps)?.dot(&(ys - y));
    let rhs_y = l_star - p.lagrangian(xs, y)?
        + 0.5 * eps * (y.norm_squared() - ys.norm_squared() + (y - ys).norm_squared());
    Ok((rhs_x - lhs_x, lhs_y - rhs_y))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Integral {
    pub total: f64,
    pub last_increment: f64,
}

impl Integral {
    fn add(&mut self, increment: f64) {
        self.total += increment;
        self.last_increment = increment;
    }
}

/// Running trapezoidal integrals of the five dissipation integrands.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegralAccumulators {
    pub weighted_gap: Integral,
    pub weighted_grad_f: Integral,
    pub weighted_grad_g: Integral,
    /// Undefined when γ ≡ 0.
    pub weighted_kinetic: Option<Integral>,
    pub weighted_delta: Integral,
}

impl IntegralAccumulators {
    pub fn new(s: &Schedule) -> Self {
        Self {
            weighted_kinetic: (!s.is_hessian_free()).then(Integral::default),
            ..Default::default()
        }
    }

    pub fn named(&self) -> Vec<(&'static str, Integral)> {
        let mut out = vec![
            ("weighted_gap", self.weighted_gap),
            ("weighted_grad_f", self.weighted_grad_f),
            ("weighted_grad_g", self.weighted_grad_g),
        ];
        if let Some(k) = self.weighted_kinetic {
            out.push(("weighted_kinetic", k));
        }
        out.push(("weighted_delta", self.weighted_delta));
        out
    }
}

struct Integrands {
    gap: f64,
    grad_f: f64,
    grad_g: f64,
    kinetic: f64,
    delta: f64,
}

fn integrands(c: &Coefficients, r: &DiagnosticsRecord) -> Integrands {
    let t = c.t;
    let w1 = t * ((1.0 - 2.0 * c.theta) * c.beta - c.theta * t * c.beta_dot);
    let kinetic = if c.gamma > 0.0 {
        t * c.gamma_growth() / c.gamma * r.kinetic
    } else {
        0.0
    };
    Integrands {
        gap: w1 * r.gap,
        grad_f: w1 * r.grad_f_res * r.grad_f_res,
        grad_g: w1 * r.grad_g_res * r.grad_g_res,
        kinetic,
        delta: t * c.gamma * c.damping_gap() * r.delta,
    }
}

pub fn accumulate(
    acc: &IntegralAccumulators,
    prev: &DiagnosticsRecord,
    cur: &DiagnosticsRecord,
    s: &Schedule,
) -> Result<IntegralAccumulators> {
    if !(cur.t > prev.t) {
        return Err(Error::Argument(format!(
            "accumulation needs increasing times, got {} then {}",
            prev.t, cur.t
        )));
    }
    let a = integrands(&s.at(prev.t)?, prev);
    let b = integrands(&s.at(cur.t)?, cur);
    let h = 0.5 * (cur.t - prev.t);
    let mut out = *acc;
    out.weighted_gap.add(h * (a.gap + b.gap));
    out.weighted_grad_f.add(h * (a.grad_f + b.grad_f));
    out.weighted_grad_g.add(h * (a.grad_g + b.grad_g));
    if let Some(k) = out.weighted_kinetic.as_mut() {
        k.add(h * (a.kinetic + b.kinetic));
    }
    out.weighted_delta.add(h * (a.delta + b.delta));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
}

/// Least-squares line through `(ln t, ln value)` for samples inside the window.
pub fn fit_rate(samples: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = samples.iter().copied().filter(|(t, _)| *t >= lo && *t <= hi).collect();
    if pts.len() < 8 {
        return Err(Error::Argument(format!(
            "rate fit needs at least 8 samples in [{lo}, {hi}], got {}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(t, v)| !(*v > 0.0) || !(*t > 0.0)) {
        return Err(Error::Argument(format!("rate fit needs positive data, got ({t}, {v})")));
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|(t, v)| (t.ln(), v.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Argument("rate fit needs distinct sample times".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared, window })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationReport {
    pub local_maxima_count: usize,
    pub total_variation_log: f64,
    pub largest_rebound: f64,
}

pub fn oscillation_metrics(values: &[f64]) -> Result<OscillationReport> {
    if values.len() < 3 {
        return Err(Error::Argument(format!(
            "oscillation metrics need at least 3 samples, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Argument(format!("oscillation metrics need positive values, got {v}")));
    }
    // A strict interior maximum counts when the descent that follows it
    // bottoms out below the peak by more than the relative threshold.
    let mut local_maxima_count = 0;
    for i in 1..values.len() - 1 {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            let mut j = i + 1;
            while j + 1 < values.len() && values[j + 1] <= values[j] {
                j += 1;
            }
            if values[i] > values[j] * (1.0 + MAXIMUM_THRESHOLD) {
                local_maxima_count += 1;
            }
        }
    }
    let logs: Vec<f64> = values.iter().map(|v| v.log10()).collect();
    let total_variation_log = logs.windows(2).map(|w| (w[1] - w[0]).abs()).sum();

    // Each maximal ascending run goes from a local minimum to the next local maximum.
    let mut largest_rebound = 0.0f64;
    let mut run_start = logs[0];
    for w in logs.windows(2) {
        if w[1] > w[0] {
            largest_rebound = largest_rebound.max(w[1] - run_start);
        } else {
            run_start = w[1];
        }
    }
    Ok(OscillationReport { local_maxima_count, total_variation_log, largest_rebound })
}

/// Floors values at [`GAP_FLOOR`] so that log-domain metrics stay defined.
pub fn floor_for_log(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    values.into_iter().map(|v| v.max(GAP_FLOOR)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::BilinearQuadraticParams;
    use crate::schedule::TimeFn;
    use approx::assert_relative_eq;

    fn bilinear() -> SaddleProblem {
        SaddleProblem::bilinear_quadratic(BilinearQuadraticParams::new(1.0, 6.0, 4.0, 10.0).unwrap()).unwrap()
    }

    fn case1(gamma: f64) -> Schedule {
        Schedule::case1(19.0, 1.0, gamma, TimeFn::power(2.0, -2.0), 1.0).unwrap()
    }

    fn v(a: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(a)
    }

    fn paper_initial() -> SystemState {
        SystemState::new(v(&[1.0, 1.5]), v(&[1.0, 1.5]), v(&[1.0, 1.0]), v(&[1.0, 1.0])).unwrap()
    }

    #[test]
    fn initial_gap_of_quadratic_example() {
        let p = bilinear();
        let z = ReferenceSaddle::for_problem(&p).unwrap();
        let r = record(&p, &case1(2.0 / 15.0), 1.0, &paper_initial(), &z).unwrap();
        assert_relative_eq!(r.gap, 461.0, max_relative = 1e-14);
        assert!(r.is_finite());
        assert_relative_eq!(r.norm_z, (2.0f64 * (1.0 + 2.25)).sqrt(), max_relative = 1e-14);
        assert_eq!(r.norm_z, r.dist_to_saddle);
    }

    #[test]
    fn stationary_saddle_without_tikhonov() {
        let p = bilinear();
        let z = ReferenceSaddle::for_problem(&p).unwrap();
        let s = case1(1.0 / 6.0).ablation_variant(false, true);
        let r = record(&p, &s, 3.0, &SystemState::zeros(2, 2), &z).unwrap();
        assert_eq!((r.gap, r.delta, r.res_x, r.res_y), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.energy_e, Some(0.0));
        assert_eq!(r.energy_ebar, Some(0.0));
    }

    #[test]
    fn rejects_non_saddle() {
        let p = bilinear();
        assert!(ReferenceSaddle::new(&p, v(&[1.0, 0.0]), v(&[0.0, 0.0])).is_err());
        let z = ReferenceSaddle::new(&p, v(&[6.0, -1.0]), v(&[10.0, -4.0])).unwrap();
        assert_eq!(z.x()[0], 6.0);
    }

    #[test]
    fn eta_is_constant_for_power_schedule() {
        let s = case1(1.0 / 6.0);
        for t in [1.0, 2.5, 10.0, 77.0] {
            let (eta, n) = energy_weights(&s.at(t).unwrap()).unwrap();
            assert_relative_eq!(eta, 15.0, max_relative = 1e-12);
            // n = (β+2)(α−β−3)
            assert_relative_eq!(n, 45.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn energies_dominate_weighted_gap() {
        let p = bilinear();
        let z = ReferenceSaddle::for_problem(&p).unwrap();
        let s = case1(3.0 / 20.0);
        for t in [1.0, 4.0, 9.0] {
            let st = paper_initial();
            let r = record(&p, &s, t, &st, &z).unwrap();
            let c = s.at(t).unwrap();
            assert!(r.energy_e.unwrap() >= t * t * c.beta * r.gap);
            assert!(r.energy_ebar.unwrap() >= c.beta * r.gap);
        }
    }

    #[test]
    fn energies_not_applicable_without_hessian_damping() {
        let p = bilinear();
        let z = ReferenceSaddle::for_problem(&p).unwrap();
        let s = case1(2.0 / 15.0).ablation_variant(true, false);
        let r = record(&p, &s, 2.0, &paper_initial(), &z).unwrap();
        assert!(r.energy_e.is_none() && r.energy_ebar.is_none());
        assert!(IntegralAccumulators::new(&s).weighted_kinetic.is_none());
    }

    #[test]
    fn energy_e_by_hand() {
        // Origin saddle, x = (1,0), y = 0, zero velocity, t = 1, γ = 1/6.
        let p = bilinear();
        let z = ReferenceSaddle::for_problem(&p).unwrap();
        let s = case1(1.0 / 6.0);
        let st = SystemState::new(v(&[1.0, 0.0]), v(&[0.0, 0.0]), v(&[0.0, 0.0]), v(&[0.0, 0.0])).unwrap();
        // gap = f(x) = 1, ε = 2: E1 = 1·(1 + 1) = 2
        // ∇xL_t(x, 0) = ∇f + εx = (2·1·(1,6)) + (2,0) = (4, 12); γ·that = (2/3, 2)
        // E2 = ½‖15(1,0) + (2/3, 2)‖² + 45/2 = ½((47/3)² + 4) + 22.5
        // ∇yL_t(x, 0) = Kx = c·(a·x) = (4, 10); −γ·that = (−2/3, −5/3)
        // E3 = ½‖(−2/3, −5/3)‖² = ½(4/9 + 25/9)
        let expected = 2.0 + 0.5 * ((47.0f64 / 3.0).powi(2) + 4.0) + 22.5 + 0.5 * 29.0 / 9.0;
        let got = energy_e(&p, &s, 1.0, &st, &z).unwrap().unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-13);
        // at t = 1 the two energies coincide
        assert_relative_eq!(energy_ebar(&p, &s, 1.0, &st, &z).unwrap().unwrap(), expected, max_relative = 1e-13);
    }

    fn synthetic(t: f64, gap: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            gap,
            grad_f_res: 0.0,
            grad_g_res: 0.0,
            delta: 0.0,
            res_x: 0.0,
            res_y: 0.0,
            energy_e: None,
            energy_ebar: None,
            norm_z: 0.0,
            dist_to_saddle: 0.0,
            kinetic: 0.0,
        }
    }

    #[test]
    fn trapezoid_exact_on_constant_and_linear() {
        // θ = 1/2, β = 2/t: w1 = t((1−2θ)β − θtβ̇) = 1, so the gap integrand equals the gap.
        let s = Schedule::custom(
            0.5,
            TimeFn::constant(1.0),
            TimeFn::from_fn("2/t", |t| (2.0 / t, -2.0 / (t * t))),
            TimeFn::zero(),
            TimeFn::zero(),
            1e-300,
        )
        .unwrap();
        let acc = IntegralAccumulators::new(&s);
        let one = accumulate(&acc, &synthetic(1.0, 1.0), &synthetic(2.0, 1.0), &s).unwrap();
        assert_relative_eq!(one.weighted_gap.total, 1.0, max_relative = 1e-15);
        // θ = 1/4, β ≡ 2: w1 = t, so a unit gap integrates t.
        let s_lin = Schedule::custom(
            0.25,
            TimeFn::constant(1.0),
            TimeFn::constant(2.0),
            TimeFn::zero(),
            TimeFn::zero(),
            1e-300,
        )
        .unwrap();
        let lin = accumulate(&acc, &synthetic(1e-300, 1.0), &synthetic(2.0, 1.0), &s_lin).unwrap();
        assert_relative_eq!(lin.weighted_gap.total, 2.0, max_relative = 1e-12);
        assert_eq!(lin.weighted_gap.last_increment, lin.weighted_gap.total);
        assert!(accumulate(&acc, &synthetic(2.0, 1.0), &synthetic(2.0, 1.0), &s).is_err());
    }

    #[test]
    fn fit_exact_power_law_and_constant() {
        let pts: Vec<(f64, f64)> = (0..50).map(|i| 10.0 + 20.0 * i as f64 / 49.0).map(|t| (t, t.powi(-3))).collect();
        let f = fit_rate(&pts, (10.0, 30.0)).unwrap();
        assert!((f.slope + 3.0).abs() <= 1e-10);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        let flat: Vec<(f64, f64)> = pts.iter().map(|(t, _)| (*t, 5.0)).collect();
        assert!(fit_rate(&flat, (10.0, 30.0)).unwrap().slope.abs() <= 1e-12);
    }

    #[test]
    fn fit_oscillating_power_law() {
        let pts: Vec<(f64, f64)> = (0..2000)
            .map(|i| 10.0 + 90.0 * i as f64 / 1999.0)
            .map(|t| (t, t.powi(-3) * (2.0 + t.sin())))
            .collect();
        let f = fit_rate(&pts, (10.0, 100.0)).unwrap();
        assert!((f.slope + 3.0).abs() <= 0.15, "{}", f.slope);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let pts: Vec<(f64, f64)> = (1..=7).map(|i| (i as f64, 1.0)).collect();
        assert!(fit_rate(&pts, (0.0, 10.0)).is_err());
        let mut pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 1.0)).collect();
        pts[4].1 = 0.0;
        assert!(fit_rate(&pts, (0.0, 10.0)).is_err());
    }

    #[test]
    fn oscillation_basics() {
        let r = oscillation_metrics(&[8.0, 4.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.local_maxima_count, 0);
        assert_relative_eq!(r.total_variation_log, 8f64.log10(), max_relative = 1e-14);
        assert_eq!(r.largest_rebound, 0.0);
        let r = oscillation_metrics(&[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.local_maxima_count, 1);
        assert_relative_eq!(r.largest_rebound, 2f64.log10(), max_relative = 1e-14);
        assert!(oscillation_metrics(&[1.0, 0.0, 1.0]).is_err());
        assert!(oscillation_metrics(&[1.0, 2.0]).is_err());
        // drop below the noise threshold is not a maximum
        assert_eq!(oscillation_metrics(&[1.0, 2.0, 1.9999]).unwrap().local_maxima_count, 0);
    }

    #[test]
    fn oscillation_counts_damped_sine_maxima() {
        let end = 20.0 * std::f64::consts::PI;
        let ts: Vec<f64> = (0..200_001).map(|i| 1.0 + (end - 1.0) * i as f64 / 200_000.0).collect();
        let vals: Vec<f64> = ts.iter().map(|t| (2.0 + t.sin()) / t).collect();
        // Oracle: sign changes + → − of the derivative numerator t cos t − 2 − sin t.
        let num = |t: f64| t * t.cos() - 2.0 - t.sin();
        let oracle = ts.windows(2).filter(|w| num(w[0]) > 0.0 && num(w[1]) <= 0.0).count();
        assert_eq!(oracle, 9);
        assert_eq!(oscillation_metrics(&vals).unwrap().local_maxima_count, oracle);
    }

    #[test]
    fn strong_convexity_slacks_vanish_at_the_saddle() {
        let p = bilinear();
        let z = ReferenceSaddle::for_problem(&p).unwrap();
        let s = case1(2.0 / 15.0);
        let at_saddle = SystemState::zeros(2, 2);
        let (sx, sy) = check_prop1(&p, &s, 1.0, &at_saddle, &z).unwrap();
        assert_eq!((sx, sy), (0.0, 0.0));
        let st = paper_initial();
        let (sx, sy) = check_prop1(&p, &s, 1.0, &st, &z).unwrap();
        assert!(sx >= -1e-9 && sy >= -1e-9);
    }
}
