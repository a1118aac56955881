//! Adaptive Dormand-Prince 5(4) integration on a fixed observation grid.
//!
//! Steps are clipped so that every observation time is hit exactly; there is
//! no dense output. The embedded 4th-order solution only drives the step
//! size controller.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Number of observation times, endpoints included.
    pub sample_count: usize,
    pub spacing: GridSpacing,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-3,
            h_max: 0.5,
            max_steps: 10_000_000,
            sample_count: 400,
            spacing: GridSpacing::Log,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(msg));
        if !(self.rtol >= 1e-14) || !self.rtol.is_finite() {
            return bad(format!("rtol must be >= 1e-14, got {}", self.rtol));
        }
        if !(self.atol >= 1e-16) || !self.atol.is_finite() {
            return bad(format!("atol must be >= 1e-16, got {}", self.atol));
        }
        if !(self.h_init > 0.0 && self.h_max > 0.0 && self.h_init <= self.h_max) {
            return bad(format!(
                "need 0 < h_init <= h_max, got h_init = {}, h_max = {}",
                self.h_init, self.h_max
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.sample_count < 2 {
            return bad(format!("sample_count must be >= 2, got {}", self.sample_count));
        }
        Ok(())
    }
}

/// Observation times in `[t0, t_end]`, both endpoints included exactly.
pub fn observation_grid(t0: f64, t_end: f64, count: usize, spacing: GridSpacing) -> Result<Vec<f64>> {
    if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::Argument(format!("need finite t0 < t_end, got [{t0}, {t_end}]")));
    }
    if count < 2 {
        return Err(Error::Argument(format!("grid needs at least 2 points, got {count}")));
    }
    let last = (count - 1) as f64;
    let mut grid: Vec<f64> = match spacing {
        GridSpacing::Linear => (0..count).map(|i| t0 + (t_end - t0) * (i as f64 / last)).collect(),
        GridSpacing::Log => {
            if t0 <= 0.0 {
                return Err(Error::Argument(format!("log-spaced grid needs t0 > 0, got {t0}")));
            }
            let ratio = (t_end / t0).ln();
            (0..count).map(|i| t0 * (ratio * i as f64 / last).exp()).collect()
        }
    };
    grid[0] = t0;
    grid[count - 1] = t_end;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: DVector<f64>,
    /// Size of the step that landed on this sample (0 for the initial one).
    pub accepted_step: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stats: IntegrationStats,
}

/// Integrates `ẏ = rhs(t, y)` from `t0` to `t_end`, reporting the state at
/// the configured observation grid.
pub fn integrate<F, O>(
    rhs: F,
    t0: f64,
    t_end: f64,
    initial: &DVector<f64>,
    cfg: &IntegratorConfig,
    observer: O,
) -> Result<Trajectory>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    O: FnMut(&Sample),
{
    cfg.validate()?;
    let grid = observation_grid(t0, t_end, cfg.sample_count, cfg.spacing)?;
    integrate_on_grid(rhs, &grid, initial, cfg, observer)
}

/// Same as [`integrate`] with an explicit, strictly increasing grid whose
/// first entry is the initial time.
pub fn integrate_on_grid<F, O>(
    mut rhs: F,
    grid: &[f64],
    initial: &DVector<f64>,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<Trajectory>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    O: FnMut(&Sample),
{
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("observation grid must be strictly increasing with >= 2 points".into()));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("initial state is not finite".into()));
    }

    let mut stats = IntegrationStats::default();
    let mut t = grid[0];
    let mut y = initial.clone();
    let first = Sample { t, state: y.clone(), accepted_step: 0.0 };
    observer(&first);
    let mut samples = Vec::with_capacity(grid.len());
    samples.push(first);

    let mut k1 = rhs(t, &y)?;
    stats.rhs_evals += 1;
    let mut h = cfg.h_init.min(cfg.h_max);
    let mut next = 1;

    while next < grid.len() {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::Divergence {
                t,
                steps: stats.accepted + stats.rejected,
                state: y.iter().copied().collect(),
            });
        }
        let target = grid[next];
        let remaining = target - t;
        let hits = h >= remaining;
        let step = if hits { remaining } else { h };

        let k2 = rhs(t + C2 * step, &(&y + &k1 * (step * A21)))?;
        let k3 = rhs(t + C3 * step, &(&y + (&k1 * A31 + &k2 * A32) * step))?;
        let k4 = rhs(t + C4 * step, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * step))?;
        let k5 = rhs(
            t + C5 * step,
            &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * step),
        )?;
        let t_new = if hits { target } else { t + step };
        let k6 = rhs(
            t_new,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * step),
        )?;
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * step;
        let k7 = rhs(t_new, &y_new)?;
        stats.rhs_evals += 6;

        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * step;
        let err = scaled_rms(&err_vec, &y, &y_new, cfg);

        if err <= 1.0 {
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { t: t_new });
            }
            stats.accepted += 1;
            t = t_new;
            y = y_new;
            k1 = k7;
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            let proposal = step * factor;
            h = if hits { proposal.max(h) } else { proposal }.min(cfg.h_max);
            if hits {
                let sample = Sample { t, state: y.clone(), accepted_step: step };
                observer(&sample);
                samples.push(sample);
                next += 1;
            }
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
            } else {
                MIN_FACTOR
            };
            h = step * factor;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::BlowUp { t });
            }
        }
    }
    Ok(Trajectory { samples, stats })
}

fn scaled_rms(err: &DVector<f64>, y: &DVector<f64>, y_new: &DVector<f64>, cfg: &IntegratorConfig) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new.iter()))
        .map(|(e, (a, b))| {
            let scale = cfg.atol + cfg.rtol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    let rms = (sum / err.len().max(1) as f64).sqrt();
    if rms.is_nan() { f64::INFINITY } else { rms }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(cfg_rtol: f64, count: usize) -> IntegratorConfig {
        IntegratorConfig {
            rtol: cfg_rtol,
            atol: cfg_rtol * 1e-2,
            sample_count: count,
            spacing: GridSpacing::Linear,
            ..Default::default()
        }
    }

    #[test]
    fn exponential_decay() {
        let cfg = linear(1e-8, 2);
        let out = integrate(|_, y| Ok(-y), 0.0, 1.0, &DVector::from_element(1, 1.0), &cfg, |_| {}).unwrap();
        let last = out.samples.last().unwrap();
        assert_eq!(last.t, 1.0);
        assert!((last.state[0] - (-1f64).exp()).abs() <= 10.0 * cfg.rtol);
    }

    #[test]
    fn harmonic_oscillator() {
        let cfg = linear(1e-8, 200);
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let end = 10.0 * std::f64::consts::PI;
        let out = integrate(
            |_, y| Ok(DVector::from_vec(vec![y[1], -y[0]])),
            0.0,
            end,
            &y0,
            &cfg,
            |_| {},
        )
        .unwrap();
        let worst = out
            .samples
            .iter()
            .map(|s| (s.state[0] - s.t.cos()).abs().max((s.state[1] + s.t.sin()).abs()))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-5, "{worst}");
    }

    #[test]
    fn critically_damped() {
        // A = [[0,1],[-1,-2]], x(0) = (1, 0): x(t) = (1+t)e^{-t}, ẋ = -t e^{-t}
        let cfg = linear(1e-8, 2);
        let out = integrate(
            |_, y| Ok(DVector::from_vec(vec![y[1], -y[0] - 2.0 * y[1]])),
            0.0,
            5.0,
            &DVector::from_vec(vec![1.0, 0.0]),
            &cfg,
            |_| {},
        )
        .unwrap();
        let s = out.samples.last().unwrap();
        let e = (-5f64).exp();
        assert!((s.state[0] - 6.0 * e).abs() <= 1e-7);
        assert!((s.state[1] + 5.0 * e).abs() <= 1e-7);
    }

    #[test]
    fn first_sample_is_initial_condition_and_grid_is_hit() {
        let cfg = IntegratorConfig { sample_count: 25, ..Default::default() };
        let y0 = DVector::from_vec(vec![0.3, -0.7]);
        let mut seen = Vec::new();
        let out = integrate(|t, y| Ok(y * (-1.0 / t)), 1.0, 30.0, &y0, &cfg, |s| seen.push(s.t)).unwrap();
        assert_eq!(out.samples[0].state, y0);
        assert_eq!(out.samples[0].accepted_step, 0.0);
        let grid = observation_grid(1.0, 30.0, 25, GridSpacing::Log).unwrap();
        let times: Vec<f64> = out.samples.iter().map(|s| s.t).collect();
        assert_eq!(times, grid);
        assert_eq!(seen, grid);
        for (i, t) in grid.iter().enumerate() {
            let expected = 30f64.powf(i as f64 / 24.0);
            assert!((t - expected).abs() <= 1e-12 * expected);
        }
        assert!(out.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn deterministic_reruns() {
        let cfg = IntegratorConfig { sample_count: 50, ..Default::default() };
        let f = |t: f64, y: &DVector<f64>| Ok(DVector::from_vec(vec![y[1], -t * y[0] - 0.1 * y[1]]));
        let y0 = DVector::from_vec(vec![1.0, 0.5]);
        let a = integrate(f, 1.0, 20.0, &y0, &cfg, |_| {}).unwrap();
        let b = integrate(f, 1.0, 20.0, &y0, &cfg, |_| {}).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn step_budget_exhaustion_reports_divergence() {
        let cfg = IntegratorConfig { max_steps: 10, h_init: 1e-4, sample_count: 2, ..Default::default() };
        let err = integrate(|_, y| Ok(-y), 1.0, 100.0, &DVector::from_element(1, 1.0), &cfg, |_| {})
            .unwrap_err();
        match err {
            Error::Divergence { steps, state, .. } => {
                assert_eq!(steps, 10);
                assert_eq!(state.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn finite_time_blowup_is_reported() {
        // ẏ = y², y(0) = 1 explodes at t = 1
        let cfg = linear(1e-8, 2);
        let err = integrate(|_, y| Ok(y.map(|v| v * v)), 0.0, 2.0, &DVector::from_element(1, 1.0), &cfg, |_| {})
            .unwrap_err();
        match err {
            Error::BlowUp { t } => assert!(t <= 1.0 + 1e-6 && t > 0.9, "{t}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        let bad = IntegratorConfig { rtol: 1e-15, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig { h_init: 1.0, h_max: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(observation_grid(0.0, 1.0, 10, GridSpacing::Log).is_err());
        assert!(observation_grid(2.0, 1.0, 10, GridSpacing::Linear).is_err());
    }
}
