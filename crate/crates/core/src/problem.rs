//! Convex-concave bilinear saddle problems
//!
//! ```text
//! min_x max_y  L(x, y) = f(x) + <Kx, y> - g(y)
//! ```
//!
//! with `f`, `g` convex and twice continuously differentiable. The problem is
//! held as an oracle bundle: values, gradients and Hessian-vector products of
//! `f` and `g`, plus a dense coupling matrix `K` (the acceleration solves in
//! [`crate::dynamics`] need it explicitly).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A convex `C^2` function accessed through first and second order oracles.
pub trait SmoothConvex: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn grad(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `v -> ∇²φ(x) v`
    fn hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

/// `φ(x) = ½ xᵀ H x + <l, x>` with `H` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    /// `σ` when `H = σI`, so products skip the dense matrix.
    identity_scale: Option<f64>,
}

impl Quadratic {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self> {
        if !hessian.is_square() {
            return Err(Error::Construction("quadratic Hessian must be square".into()));
        }
        check_dim("linear term", linear.len(), hessian.nrows())?;
        let asym = (&hessian - hessian.transpose()).amax();
        if asym > 1e-12 * (1.0 + hessian.amax()) {
            return Err(Error::Construction("quadratic Hessian must be symmetric".into()));
        }
        let identity_scale = scaled_identity(&hessian);
        Ok(Self { hessian, linear, identity_scale })
    }

    /// `(<a, x>)²`, i.e. `H = 2 a aᵀ`.
    pub fn squared_linear(a: &DVector<f64>) -> Self {
        Self {
            hessian: 2.0 * a * a.transpose(),
            linear: DVector::zeros(a.len()),
            identity_scale: None,
        }
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self.identity_scale {
            Some(s) => v * s,
            None => &self.hessian * v,
        }
    }
}

fn scaled_identity(h: &DMatrix<f64>) -> Option<f64> {
    let s = *h.get((0, 0))?;
    let n = h.nrows();
    let exact = (0..n).all(|j| (0..n).all(|i| h[(i, j)] == if i == j { s } else { 0.0 }));
    exact.then_some(s)
}

impl SmoothConvex for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&self.apply(x)) + self.linear.dot(x)
    }

    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply(x) + &self.linear
    }

    fn hess_vec(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v)
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type HessVecFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// A user-supplied function given by closures. Convexity is the caller's
/// responsibility.
#[derive(Clone)]
pub struct FnConvex {
    dim: usize,
    value: Arc<ValueFn>,
    grad: Arc<GradFn>,
    hess_vec: Arc<HessVecFn>,
}

impl FnConvex {
    pub fn new(
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hess_vec: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Arc::new(value),
            grad: Arc::new(grad),
            hess_vec: Arc::new(hess_vec),
        }
    }
}

impl fmt::Debug for FnConvex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnConvex").field("dim", &self.dim).finish_non_exhaustive()
    }
}

impl SmoothConvex for FnConvex {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }
    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad)(x)
    }
    fn hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        (self.hess_vec)(x, v)
    }
}

/// Constants of the quadratic min-max family
/// `f(x) = (m x₁ + n x₂)²`, `g(y) = (j y₁ + k y₂)²`, `K = (j, k)ᵀ (m, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearQuadraticParams {
    pub m: f64,
    pub n: f64,
    pub j: f64,
    pub k: f64,
}

impl BilinearQuadraticParams {
    pub fn new(m: f64, n: f64, j: f64, k: f64) -> Result<Self> {
        let p = Self { m, n, j, k };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("n", self.n), ("j", self.j), ("k", self.k)] {
            if !v.is_finite() || v == 0.0 {
                return Err(Error::Construction(format!(
                    "bilinear-quadratic constant {name} must be finite and nonzero, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn primal_direction(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.m, self.n])
    }

    fn dual_direction(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.j, self.k])
    }

    /// Euclidean distance from `(x, y)` to the saddle set
    /// `{ m x₁ + n x₂ = 0, j y₁ + k y₂ = 0 }`.
    pub fn dist_to_solution_set(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let a = self.primal_direction();
        let c = self.dual_direction();
        let dx = a.dot(x);
        let dy = c.dot(y);
        (dx * dx / a.norm_squared() + dy * dy / c.norm_squared()).sqrt()
    }
}

/// Data of the ℓ₂-regularized least squares problem
/// `Φ(x) = ½‖Kx − b‖² + ω‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct L2RegularizedParams {
    pub k_matrix: DMatrix<f64>,
    pub b: DVector<f64>,
    pub omega: f64,
}

impl L2RegularizedParams {
    pub fn new(k_matrix: DMatrix<f64>, b: DVector<f64>, omega: f64) -> Result<Self> {
        let p = Self { k_matrix, b, omega };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Construction(format!(
                "regularization weight omega must be positive, got {}",
                self.omega
            )));
        }
        if self.k_matrix.nrows() == 0 || self.k_matrix.ncols() == 0 {
            return Err(Error::Construction("K must be nonempty".into()));
        }
        check_dim("b", self.b.len(), self.k_matrix.nrows())
            .map_err(|e| Error::Construction(e.to_string()))
    }

    /// `Φ(x) = ½‖Kx − b‖² + ω‖x‖²`
    pub fn phi(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim("x", x.len(), self.k_matrix.ncols())?;
        let r = &self.k_matrix * x - &self.b;
        Ok(0.5 * r.norm_squared() + self.omega * x.norm_squared())
    }

    /// `Φ(x) − Φ(x*)` for the minimizer `x*`, evaluated as the quadratic form
    /// `½‖K d‖² + ω‖d‖²` with `d = x − x*` to avoid cancellation.
    pub fn objective_error(&self, x: &DVector<f64>, x_star: &DVector<f64>) -> Result<f64> {
        check_dim("x", x.len(), self.k_matrix.ncols())?;
        check_dim("x*", x_star.len(), self.k_matrix.ncols())?;
        let d = x - x_star;
        Ok(0.5 * (&self.k_matrix * &d).norm_squared() + self.omega * d.norm_squared())
    }

    /// Unique minimizer of `Φ`: `(KᵀK + 2ωI) x = Kᵀb`.
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        let n = self.k_matrix.ncols();
        let kt = self.k_matrix.transpose();
        let lhs = &kt * &self.k_matrix + DMatrix::identity(n, n) * (2.0 * self.omega);
        let chol = lhs
            .cholesky()
            .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
        Ok(chol.solve(&(kt * &self.b)))
    }
}

/// Which built-in family a problem came from; drives [`SaddleProblem::reference_saddle`].
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemFamily {
    BilinearQuadratic(BilinearQuadraticParams),
    L2Regularized(L2RegularizedParams),
    Custom,
}

#[derive(Debug, Clone)]
pub struct SaddleProblem {
    f: Arc<dyn SmoothConvex>,
    g: Arc<dyn SmoothConvex>,
    k: DMatrix<f64>,
    k_t: DMatrix<f64>,
    family: ProblemFamily,
}

impl SaddleProblem {
    /// Builds a user problem. `k` is `m × n` with `n = f.dim()`, `m = g.dim()`.
    pub fn custom(
        f: Arc<dyn SmoothConvex>,
        g: Arc<dyn SmoothConvex>,
        k: DMatrix<f64>,
    ) -> Result<Self> {
        Self::assemble(f, g, k, ProblemFamily::Custom)
    }

    fn assemble(
        f: Arc<dyn SmoothConvex>,
        g: Arc<dyn SmoothConvex>,
        k: DMatrix<f64>,
        family: ProblemFamily,
    ) -> Result<Self> {
        if f.dim() == 0 || g.dim() == 0 {
            return Err(Error::Construction("dimensions must be positive".into()));
        }
        if k.ncols() != f.dim() || k.nrows() != g.dim() {
            return Err(Error::Construction(format!(
                "K is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                g.dim(),
                f.dim()
            )));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Construction("K has non-finite entries".into()));
        }
        let k_t = k.transpose();
        Ok(Self { f, g, k, k_t, family })
    }

    /// Quadratic min-max problem with rank-one `K = (j, k)ᵀ (m, n)`.
    pub fn bilinear_quadratic(params: BilinearQuadraticParams) -> Result<Self> {
        params.validate()?;
        let a = params.primal_direction();
        let c = params.dual_direction();
        let k = &c * a.transpose();
        Self::assemble(
            Arc::new(Quadratic::squared_linear(&a)),
            Arc::new(Quadratic::squared_linear(&c)),
            k,
            ProblemFamily::BilinearQuadratic(params),
        )
    }

    /// Saddle form `ω‖x‖² + <Kx − b, y> − ½‖y‖²` of the ℓ₂ problem, with the
    /// `−<b, y>` term folded into `g(y) = ½‖y‖² + <b, y>`.
    pub fn l2_regularized(params: L2RegularizedParams) -> Result<Self> {
        params.validate()?;
        let (m, n) = params.k_matrix.shape();
        let f = Quadratic::new(
            DMatrix::identity(n, n) * (2.0 * params.omega),
            DVector::zeros(n),
        )?;
        let g = Quadratic::new(DMatrix::identity(m, m), params.b.clone())?;
        let k = params.k_matrix.clone();
        Self::assemble(
            Arc::new(f),
            Arc::new(g),
            k,
            ProblemFamily::L2Regularized(params),
        )
    }

    /// Primal dimension.
    pub fn n(&self) -> usize {
        self.k.ncols()
    }

    /// Dual dimension.
    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    pub fn family(&self) -> &ProblemFamily {
        &self.family
    }

    pub fn f_value(&self, x: &DVector<f64>) -> f64 {
        self.f.value(x)
    }
    pub fn f_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.f.grad(x)
    }
    pub fn f_hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.f.hess_vec(x, v)
    }
    pub fn g_value(&self, y: &DVector<f64>) -> f64 {
        self.g.value(y)
    }
    pub fn g_grad(&self, y: &DVector<f64>) -> DVector<f64> {
        self.g.grad(y)
    }
    pub fn g_hess_vec(&self, y: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.g.hess_vec(y, v)
    }

    /// `x -> Kx`
    pub fn k_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.k * x
    }

    /// `y -> K*y`
    pub fn k_adjoint_apply(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.k_t * y
    }

    pub fn k_dense(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub(crate) fn check_xy(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        check_dim("x", x.len(), self.n())?;
        check_dim("y", y.len(), self.m())
    }

    /// `L(x, y) = f(x) + <Kx, y> − g(y)`
    pub fn lagrangian(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        self.check_xy(x, y)?;
        Ok(self.f_value(x) + self.k_apply(x).dot(y) - self.g_value(y))
    }

    /// `L_ε(x, y) = L(x, y) + (ε/2)(‖x‖² − ‖y‖²)`
    pub fn augmented_lagrangian(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        eps: f64,
    ) -> Result<f64> {
        check_eps(eps)?;
        Ok(self.lagrangian(x, y)? + 0.5 * eps * (x.norm_squared() - y.norm_squared()))
    }

    /// `∇f(x) + K*ỹ + εx`; the caller passes the (possibly extrapolated) dual
    /// argument `ỹ`.
    pub fn grad_x_aug(
        &self,
        x: &DVector<f64>,
        y_tilde: &DVector<f64>,
        eps: f64,
    ) -> Result<DVector<f64>> {
        self.check_xy(x, y_tilde)?;
        check_eps(eps)?;
        Ok(self.grad_x_aug_unchecked(x, y_tilde, eps))
    }

    /// `Kx̃ − ∇g(y) − εy`
    pub fn grad_y_aug(
        &self,
        x_tilde: &DVector<f64>,
        y: &DVector<f64>,
        eps: f64,
    ) -> Result<DVector<f64>> {
        self.check_xy(x_tilde, y)?;
        check_eps(eps)?;
        Ok(self.grad_y_aug_unchecked(x_tilde, y, eps))
    }

    pub(crate) fn grad_x_aug_unchecked(
        &self,
        x: &DVector<f64>,
        y_tilde: &DVector<f64>,
        eps: f64,
    ) -> DVector<f64> {
        let mut out = self.f_grad(x);
        out += self.k_adjoint_apply(y_tilde);
        out.axpy(eps, x, 1.0);
        out
    }

    pub(crate) fn grad_y_aug_unchecked(
        &self,
        x_tilde: &DVector<f64>,
        y: &DVector<f64>,
        eps: f64,
    ) -> DVector<f64> {
        let mut out = self.k_apply(x_tilde);
        out -= self.g_grad(y);
        out.axpy(-eps, y, 1.0);
        out
    }

    /// Norms of `∇f(x) + K*y` and `Kx − ∇g(y)`; both vanish exactly on the
    /// saddle set.
    pub fn optimality_residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<(f64, f64)> {
        self.check_xy(x, y)?;
        let rx = self.f_grad(x) + self.k_adjoint_apply(y);
        let ry = self.k_apply(x) - self.g_grad(y);
        Ok((rx.norm(), ry.norm()))
    }

    /// Minimal-norm saddle point of a built-in family.
    pub fn reference_saddle(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        match &self.family {
            ProblemFamily::BilinearQuadratic(_) => {
                Ok((DVector::zeros(self.n()), DVector::zeros(self.m())))
            }
            ProblemFamily::L2Regularized(params) => {
                let x = params.minimizer()?;
                let y = &params.k_matrix * &x - &params.b;
                Ok((x, y))
            }
            ProblemFamily::Custom => Err(Error::Unsupported(
                "no closed-form reference saddle for custom problems".into(),
            )),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Argument(format!(
            "regularization parameter must be finite and nonnegative, got {eps}"
        )));
    }
    Ok(())
}
