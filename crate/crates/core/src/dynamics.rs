//! First-order form of the damped primal-dual system.
//!
//! With `Λ = (x, y, ẋ, ẏ)` and `c(t) = γ(t) θ t`, the second-order system is
//! linear in the accelerations:
//!
//! ```text
//! ẍ + c K*ÿ = M(t, Λ)
//! ÿ − c K ẍ = N(t, Λ)
//! ```
//!
//! which decouples into `(I + c²K*K) ẍ = M − cK*N` (size `n`) and
//! `(I + c²KK*) ÿ = N + cKM` (size `m`). Both matrices are symmetric with
//! spectrum in `[1, ∞)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::SaddleProblem;
use crate::schedule::{Coefficients, Schedule};

/// `Λ = (x, y, ẋ, ẏ)`. Also used for its time derivative `(ẋ, ẏ, ẍ, ÿ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub vx: DVector<f64>,
    pub vy: DVector<f64>,
}

impl SystemState {
    pub fn new(x: DVector<f64>, y: DVector<f64>, vx: DVector<f64>, vy: DVector<f64>) -> Result<Self> {
        check_dim("vx", vx.len(), x.len())?;
        check_dim("vy", vy.len(), y.len())?;
        Ok(Self { x, y, vx, vy })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            y: DVector::zeros(m),
            vx: DVector::zeros(n),
            vy: DVector::zeros(m),
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    pub fn is_finite(&self) -> bool {
        [&self.x, &self.y, &self.vx, &self.vy]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Concatenation `[x; y; vx; vy]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DVector::zeros(2 * (n + m));
        out.rows_mut(0, n).copy_from(&self.x);
        out.rows_mut(n, m).copy_from(&self.y);
        out.rows_mut(n + m, n).copy_from(&self.vx);
        out.rows_mut(2 * n + m, m).copy_from(&self.vy);
        out
    }

    pub fn from_flat(n: usize, m: usize, flat: &DVector<f64>) -> Result<Self> {
        check_dim("flat state", flat.len(), 2 * (n + m))?;
        Ok(Self {
            x: flat.rows(0, n).into_owned(),
            y: flat.rows(n, m).into_owned(),
            vx: flat.rows(n + m, n).into_owned(),
            vy: flat.rows(2 * n + m, m).into_owned(),
        })
    }

    fn check_against(&self, p: &SaddleProblem) -> Result<()> {
        check_dim("x", self.x.len(), p.n())?;
        check_dim("y", self.y.len(), p.m())?;
        check_dim("vx", self.vx.len(), p.n())?;
        check_dim("vy", self.vy.len(), p.m())
    }
}

/// How the coupled acceleration systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStrategy {
    /// Eigendecompositions of `K*K` and `KK*` computed once; every solve is
    /// two matrix-vector products against the eigenbasis.
    #[default]
    Spectral,
    /// Dense Cholesky factorizations of both coupling matrices, refreshed
    /// whenever `c` changes.
    DenseCholesky,
    /// Only the `m × m` matrix is factorized; the `n × n` solve goes through
    /// the Sherman-Morrison-Woodbury identity
    /// `(I + c²K*K)⁻¹ = I − c²K*(I + c²KK*)⁻¹K`.
    Woodbury,
}

#[derive(Debug, Clone)]
struct Eigenbasis {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl Eigenbasis {
    fn of(gram: DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(gram);
        Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.map(|s| s.max(0.0)),
        }
    }

    /// `(I + c² G)⁻¹ r`
    fn solve(&self, c2: f64, r: &DVector<f64>) -> DVector<f64> {
        let mut coords = self.vectors.tr_mul(r);
        for (z, s) in coords.iter_mut().zip(self.values.iter()) {
            *z /= 1.0 + c2 * s;
        }
        &self.vectors * coords
    }
}

#[derive(Debug, Clone)]
struct DenseFactors {
    c: f64,
    primal: Option<Cholesky<f64, Dyn>>,
    dual: Cholesky<f64, Dyn>,
}

/// Factorization state for the acceleration solves. Owned by one
/// integration run.
#[derive(Debug, Clone)]
pub struct CouplingCache {
    strategy: SolveStrategy,
    k: DMatrix<f64>,
    k_t: DMatrix<f64>,
    spectral: Option<(Eigenbasis, Eigenbasis)>,
    dense: Option<DenseFactors>,
    t_cached: f64,
    c: f64,
}

impl CouplingCache {
    pub fn new(p: &SaddleProblem, strategy: SolveStrategy) -> Self {
        let k = p.k_dense().clone();
        let k_t = k.transpose();
        let spectral = (strategy == SolveStrategy::Spectral)
            .then(|| (Eigenbasis::of(&k_t * &k), Eigenbasis::of(&k * &k_t)));
        Self {
            strategy,
            k,
            k_t,
            spectral,
            dense: None,
            t_cached: f64::NAN,
            c: 0.0,
        }
    }

    pub fn strategy(&self) -> SolveStrategy {
        self.strategy
    }

    /// Time and `c(t)` of the most recent solve.
    pub fn last(&self) -> (f64, f64) {
        (self.t_cached, self.c)
    }

    /// `I + c² K*K`
    pub fn primal_matrix(&self, c: f64) -> DMatrix<f64> {
        let n = self.k.ncols();
        DMatrix::identity(n, n) + (&self.k_t * &self.k) * (c * c)
    }

    /// `I + c² KK*`
    pub fn dual_matrix(&self, c: f64) -> DMatrix<f64> {
        let m = self.k.nrows();
        DMatrix::identity(m, m) + (&self.k * &self.k_t) * (c * c)
    }

    fn refresh_dense(&mut self, c: f64) -> Result<()> {
        if self.dense.as_ref().is_some_and(|d| d.c == c) {
            return Ok(());
        }
        let not_spd = || Error::Numerical(format!("coupling matrix not positive definite at c = {c}"));
        let dual = self.dual_matrix(c).cholesky().ok_or_else(not_spd)?;
        let primal = match self.strategy {
            SolveStrategy::DenseCholesky => Some(self.primal_matrix(c).cholesky().ok_or_else(not_spd)?),
            _ => None,
        };
        self.dense = Some(DenseFactors { c, primal, dual });
        Ok(())
    }

    /// Solves `(I + c²K*K) a = rx` and `(I + c²KK*) b = ry`.
    pub fn solve(
        &mut self,
        t: f64,
        c: f64,
        rx: DVector<f64>,
        ry: DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.t_cached = t;
        self.c = c;
        if c == 0.0 {
            return Ok((rx, ry));
        }
        let c2 = c * c;
        match self.strategy {
            SolveStrategy::Spectral => {
                let (primal, dual) = self.spectral.as_ref().expect("spectral basis built in new()");
                Ok((primal.solve(c2, &rx), dual.solve(c2, &ry)))
            }
            SolveStrategy::DenseCholesky => {
                self.refresh_dense(c)?;
                let d = self.dense.as_ref().expect("refreshed");
                let ax = d.primal.as_ref().expect("dense path keeps primal factor").solve(&rx);
                Ok((ax, d.dual.solve(&ry)))
            }
            SolveStrategy::Woodbury => {
                self.refresh_dense(c)?;
                let d = self.dense.as_ref().expect("refreshed");
                let inner = d.dual.solve(&(&self.k * &rx));
                let ax = rx - (&self.k_t * inner) * c2;
                Ok((ax, d.dual.solve(&ry)))
            }
        }
    }
}

fn check_time(s: &Schedule, t: f64) -> Result<Coefficients> {
    s.at(t)
}

/// Right-hand sides `M`, `N` of the coupled acceleration equations.
pub fn assemble_forces(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
) -> Result<(DVector<f64>, DVector<f64>)> {
    state.check_against(p)?;
    let c = check_time(s, t)?;
    Ok(forces(p, &c, state))
}

fn forces(p: &SaddleProblem, c: &Coefficients, st: &SystemState) -> (DVector<f64>, DVector<f64>) {
    let tt = c.theta * c.t;
    let (x, y, vx, vy) = (&st.x, &st.y, &st.vx, &st.vy);

    let y_ext = y + vy * tt;
    let mut m_force = p.grad_x_aug_unchecked(x, &y_ext, c.eps) * (-c.beta);
    m_force.axpy(-c.alpha, vx, 1.0);

    let x_ext = x + vx * tt;
    let mut n_force = p.grad_y_aug_unchecked(&x_ext, y, c.eps) * c.beta;
    n_force.axpy(-c.alpha, vy, 1.0);

    if c.gamma != 0.0 {
        let mut hx = p.f_hess_vec(x, vx);
        hx.axpy(c.eps_dot, x, 1.0);
        hx.axpy(c.eps, vx, 1.0);
        hx.axpy(1.0 + c.theta, &p.k_adjoint_apply(vy), 1.0);
        m_force.axpy(-c.gamma, &hx, 1.0);

        let mut hy = p.g_hess_vec(y, vy) * -1.0;
        hy.axpy(-c.eps_dot, y, 1.0);
        hy.axpy(-c.eps, vy, 1.0);
        hy.axpy(1.0 + c.theta, &p.k_apply(vx), 1.0);
        n_force.axpy(c.gamma, &hy, 1.0);
    }
    (m_force, n_force)
}

/// `dΛ/dt` at `(t, state)`.
pub fn rhs(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
    cache: &mut CouplingCache,
) -> Result<SystemState> {
    state.check_against(p)?;
    let c = check_time(s, t)?;
    rhs_with(p, &c, state, cache)
}

fn rhs_with(
    p: &SaddleProblem,
    c: &Coefficients,
    state: &SystemState,
    cache: &mut CouplingCache,
) -> Result<SystemState> {
    let (m_force, n_force) = forces(p, c, state);
    let coupling = c.gamma * c.theta * c.t;
    let (ax, ay) = if coupling == 0.0 {
        cache.solve(c.t, 0.0, m_force, n_force)?
    } else {
        let coupled_solve = |cache: &mut CouplingCache, mx: &DVector<f64>, ny: &DVector<f64>| {
            let rx = mx - p.k_adjoint_apply(ny) * coupling;
            let ry = ny + p.k_apply(mx) * coupling;
            cache.solve(c.t, coupling, rx, ry)
        };
        let (mut ax, mut ay) = coupled_solve(cache, &m_force, &n_force)?;
        // One step of iterative refinement on ẍ + cK*ÿ = M, ÿ − cKẍ = N.
        // The normal-equation form squares the conditioning for large c.
        let res_x = &m_force - &ax - p.k_adjoint_apply(&ay) * coupling;
        let res_y = &n_force - &ay + p.k_apply(&ax) * coupling;
        let (dx, dy) = coupled_solve(cache, &res_x, &res_y)?;
        ax += dx;
        ay += dy;
        (ax, ay)
    };
    Ok(SystemState {
        x: state.vx.clone(),
        y: state.vy.clone(),
        vx: ax,
        vy: ay,
    })
}

/// Residual of the original second-order system for candidate
/// accelerations `(ax, ay)`, evaluated term by term without the `M`/`N`
/// assembly.
pub fn residual_second_order(
    p: &SaddleProblem,
    s: &Schedule,
    t: f64,
    state: &SystemState,
    ax: &DVector<f64>,
    ay: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    state.check_against(p)?;
    check_dim("ax", ax.len(), p.n())?;
    check_dim("ay", ay.len(), p.m())?;
    let c = check_time(s, t)?;
    let tt = c.theta * t;
    let SystemState { x, y, vx, vy } = state;

    let grad_x = p.grad_x_aug(x, &(y + vy * tt), c.eps)?;
    // d/dt ∇x L_t(x, y + θtẏ)
    let dgrad_x = p.f_hess_vec(x, vx)
        + x * c.eps_dot
        + vx * c.eps
        + p.k_adjoint_apply(&(vy * (1.0 + c.theta) + ay * tt));
    let rx = ax + vx * c.alpha + grad_x * c.beta + dgrad_x * c.gamma;

    let grad_y = p.grad_y_aug(&(x + vx * tt), y, c.eps)?;
    // d/dt ∇y L_t(x + θtẋ, y)
    let dgrad_y = p.k_apply(&(vx * (1.0 + c.theta) + ax * tt))
        - p.g_hess_vec(y, vy)
        - y * c.eps_dot
        - vy * c.eps;
    let ry = ay + vy * c.alpha - grad_y * c.beta - dgrad_y * c.gamma;
    Ok((rx, ry))
}

/// A problem/schedule pair with its own solve cache, evaluated on flat
/// state vectors for the integrator.
#[derive(Debug, Clone)]
pub struct Dynamics {
    problem: SaddleProblem,
    schedule: Schedule,
    cache: CouplingCache,
}

impl Dynamics {
    pub fn new(problem: SaddleProblem, schedule: Schedule, strategy: SolveStrategy) -> Self {
        let cache = CouplingCache::new(&problem, strategy);
        Self { problem, schedule, cache }
    }

    pub fn problem(&self) -> &SaddleProblem {
        &self.problem
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn derivative(&mut self, t: f64, flat: &DVector<f64>) -> Result<DVector<f64>> {
        let state = SystemState::from_flat(self.problem.n(), self.problem.m(), flat)?;
        let c = check_time(&self.schedule, t)?;
        Ok(rhs_with(&self.problem, &c, &state, &mut self.cache)?.to_flat())
    }
}
