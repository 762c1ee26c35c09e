//! The bilevel problem interface.
//!
//! A problem is `min_x f(x, y)` subject to `y ∈ S(x) = argmin_y g(x, y)`.
//! Solvers and metrics only ever see a problem through [`BilevelOracle`]:
//! function values, gradients, and Hessian-vector products of the lower-level
//! objective. Dense Hessians, the value function and a global optimality gap
//! are optional capabilities used by diagnostics.

use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::linalg::{central_diff_grad, Matrix, Vector};
use crate::rng;

/// First- and second-order access to a bilevel problem.
///
/// Implementations must be pure: every call depends only on its arguments.
pub trait BilevelOracle: Sync {
    fn name(&self) -> &str;
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;

    /// Upper-level objective.
    fn f(&self, x: &Vector, y: &Vector) -> f64;
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector;

    /// Lower-level objective.
    fn g(&self, x: &Vector, y: &Vector) -> f64;
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector;
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector;

    /// `∇²_yy g(x, y) · v`, length `dim_y`.
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;
    /// `∇²_xy g(x, y) · v` for `v` of length `dim_y`; result has length `dim_x`.
    fn hvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector;

    /// Value function `g*(x) = min_y g(x, y)`, when known in closed form.
    fn g_star(&self, _x: &Vector) -> Option<f64> {
        None
    }

    /// Dense `∇²_yy g(x, y)`, for verification oracles.
    fn hessian_yy_dense(&self, _x: &Vector, _y: &Vector) -> Option<Matrix> {
        None
    }

    /// Distance-to-global-solution measure when the solution set is known.
    fn optimality_gap(&self, _x: &Vector, _y: &Vector) -> Option<f64> {
        None
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants::default()
    }
}

impl<T: BilevelOracle + ?Sized> BilevelOracle for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim_x(&self) -> usize {
        (**self).dim_x()
    }
    fn dim_y(&self) -> usize {
        (**self).dim_y()
    }
    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        (**self).f(x, y)
    }
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_x_f(x, y)
    }
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_y_f(x, y)
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        (**self).g(x, y)
    }
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_x_g(x, y)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        (**self).grad_y_g(x, y)
    }
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        (**self).hvp_yy_g(x, y, v)
    }
    fn hvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        (**self).hvp_xy_g(x, y, v)
    }
    fn g_star(&self, x: &Vector) -> Option<f64> {
        (**self).g_star(x)
    }
    fn hessian_yy_dense(&self, x: &Vector, y: &Vector) -> Option<Matrix> {
        (**self).hessian_yy_dense(x, y)
    }
    fn optimality_gap(&self, x: &Vector, y: &Vector) -> Option<f64> {
        (**self).optimality_gap(x, y)
    }
    fn constants(&self) -> ProblemConstants {
        (**self).constants()
    }
}

/// Problem constants; `None` means unknown.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProblemConstants {
    /// PL constant of `g(x, ·)`.
    pub mu_g: Option<f64>,
    /// Lower bound on the nonzero singular values of `∇²_yy g`.
    pub lambda_g: Option<f64>,
    pub l_f0: Option<f64>,
    pub l_f1: Option<f64>,
    /// Lipschitz constant of `∇g` (smoothness of `g`).
    pub l_g1: Option<f64>,
    pub l_g2: Option<f64>,
}

impl ProblemConstants {
    /// Rejects declared constants that are not strictly positive.
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("mu_g", self.mu_g),
            ("lambda_g", self.lambda_g),
            ("l_f0", self.l_f0),
            ("l_f1", self.l_f1),
            ("l_g1", self.l_g1),
            ("l_g2", self.l_g2),
        ];
        for (name, c) in all {
            if let Some(c) = c {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "{name} must be positive, got {c}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `∇²_yy g` as a dense matrix: the problem's own form when provided,
/// otherwise assembled column by column from HVPs.
pub fn hessian_yy<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector) -> Matrix {
    if let Some(h) = oracle.hessian_yy_dense(x, y) {
        return h;
    }
    let n = oracle.dim_y();
    let cols: Vec<Vector> = (0..n)
        .map(|j| oracle.hvp_yy_g(x, y, &Vector::unit(n, j)))
        .collect();
    Matrix::from_columns(n, &cols).expect("hvp output has dim_y entries")
}

/// `∇²_xy g` as a dense `dim_x × dim_y` matrix assembled from HVPs.
pub fn jacobian_xy<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector) -> Matrix {
    let n = oracle.dim_y();
    let cols: Vec<Vector> = (0..n)
        .map(|j| oracle.hvp_xy_g(x, y, &Vector::unit(n, j)))
        .collect();
    Matrix::from_columns(oracle.dim_x(), &cols).expect("hvp output has dim_x entries")
}

/// Outcome of the PL inequality at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PlCheck {
    /// `‖∇_y g‖²`
    pub lhs: f64,
    /// `2 μ_g (g − g*)`
    pub rhs: f64,
    pub pass: bool,
}

/// Checks `‖∇_y g(x,y)‖² ≥ 2 μ_g (g(x,y) − g*(x))` at each point.
pub fn check_pl_inequality<O: BilevelOracle + ?Sized>(
    oracle: &O,
    mu_g: f64,
    points: &[(Vector, Vector)],
) -> Result<Vec<PlCheck>> {
    if !(mu_g > 0.0) {
        return Err(Error::InvalidInput("mu_g must be positive".into()));
    }
    points
        .iter()
        .map(|(x, y)| {
            let g_star = oracle.g_star(x).ok_or_else(|| {
                Error::Unsupported(alloc::format!("{} has no closed-form g*", oracle.name()))
            })?;
            let lhs = oracle.grad_y_g(x, y).norm_sq();
            let rhs = 2.0 * mu_g * (oracle.g(x, y) - g_star);
            let pass = lhs >= rhs - 1e-10 * (1.0 + rhs.abs());
            Ok(PlCheck { lhs, rhs, pass })
        })
        .collect()
}

/// Worst relative errors of analytic derivatives against central differences.
///
/// Each error is `‖analytic − fd‖₂ / max(1, ‖fd‖₂)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FdReport {
    pub grad_x_f: f64,
    pub grad_y_f: f64,
    pub grad_x_g: f64,
    pub grad_y_g: f64,
    pub hvp_yy_g: f64,
    pub hvp_xy_g: f64,
    pub points: usize,
    pub rel_tol: f64,
}

impl FdReport {
    pub fn max_error(&self) -> f64 {
        [
            self.grad_x_f,
            self.grad_y_f,
            self.grad_x_g,
            self.grad_y_g,
            self.hvp_yy_g,
            self.hvp_xy_g,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() <= self.rel_tol
    }

    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("grad_x_f", self.grad_x_f),
            ("grad_y_f", self.grad_y_f),
            ("grad_x_g", self.grad_x_g),
            ("grad_y_g", self.grad_y_g),
            ("hvp_yy_g", self.hvp_yy_g),
            ("hvp_xy_g", self.hvp_xy_g),
        ]
    }
}

fn rel_err(analytic: &Vector, fd: &Vector) -> f64 {
    analytic.dist(fd) / fd.norm().max(1.0)
}

/// Directional central difference of a vector field along `v`.
fn directional_fd<F>(field: F, p: &Vector, v: &Vector, step: f64) -> Vector
where
    F: Fn(&Vector) -> Vector,
{
    let mut hi = p.clone();
    hi.axpy(step, v);
    let mut lo = p.clone();
    lo.axpy(-step, v);
    field(&hi).sub(&field(&lo)).scale(0.5 / step)
}

/// Verifies every analytic derivative of `oracle` against central
/// differences at the given points. HVP directions are random unit vectors
/// drawn from `seed`.
pub fn fd_verify<O: BilevelOracle + ?Sized>(
    oracle: &O,
    points: &[(Vector, Vector)],
    step: f64,
    rel_tol: f64,
    seed: u64,
) -> Result<FdReport> {
    let mut rng = rng::seeded(seed);
    let mut report = FdReport {
        rel_tol,
        points: points.len(),
        ..FdReport::default()
    };
    let bump = |slot: &mut f64, e: f64| {
        if e > *slot || e.is_nan() {
            *slot = e;
        }
    };
    for (x, y) in points {
        let fx = central_diff_grad(|xp| oracle.f(xp, y), x, step)?;
        let fy = central_diff_grad(|yp| oracle.f(x, yp), y, step)?;
        let gx = central_diff_grad(|xp| oracle.g(xp, y), x, step)?;
        let gy = central_diff_grad(|yp| oracle.g(x, yp), y, step)?;
        bump(&mut report.grad_x_f, rel_err(&oracle.grad_x_f(x, y), &fx));
        bump(&mut report.grad_y_f, rel_err(&oracle.grad_y_f(x, y), &fy));
        bump(&mut report.grad_x_g, rel_err(&oracle.grad_x_g(x, y), &gx));
        bump(&mut report.grad_y_g, rel_err(&oracle.grad_y_g(x, y), &gy));

        let v = rng::unit_vector(&mut rng, oracle.dim_y());
        let hyy = directional_fd(|yp| oracle.grad_y_g(x, yp), y, &v, step);
        bump(&mut report.hvp_yy_g, rel_err(&oracle.hvp_yy_g(x, y, &v), &hyy));
        let hxy = directional_fd(|yp| oracle.grad_x_g(x, yp), y, &v, step);
        bump(&mut report.hvp_xy_g, rel_err(&oracle.hvp_xy_g(x, y, &v), &hxy));
    }
    Ok(report)
}

/// Call counts recorded by [`CountingOracle`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub f: usize,
    pub grad_x_f: usize,
    pub grad_y_f: usize,
    pub g: usize,
    pub grad_x_g: usize,
    pub grad_y_g: usize,
    pub hvp_yy_g: usize,
    pub hvp_xy_g: usize,
}

/// Wraps an oracle and counts every evaluation.
pub struct CountingOracle<O> {
    inner: O,
    counters: [AtomicUsize; 8],
}

impl<O: BilevelOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            counters: Default::default(),
        }
    }

    pub fn counts(&self) -> CallCounts {
        let c = |i: usize| self.counters[i].load(Ordering::Relaxed);
        CallCounts {
            f: c(0),
            grad_x_f: c(1),
            grad_y_f: c(2),
            g: c(3),
            grad_x_g: c(4),
            grad_y_g: c(5),
            hvp_yy_g: c(6),
            hvp_xy_g: c(7),
        }
    }

    pub fn reset(&self) {
        for c in &self.counters {
            c.store(0, Ordering::Relaxed);
        }
    }

    fn tick(&self, i: usize) {
        self.counters[i].fetch_add(1, Ordering::Relaxed);
    }
}

impl<O: BilevelOracle> BilevelOracle for CountingOracle<O> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }
    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        self.tick(0);
        self.inner.f(x, y)
    }
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.tick(1);
        self.inner.grad_x_f(x, y)
    }
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        self.tick(2);
        self.inner.grad_y_f(x, y)
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        self.tick(3);
        self.inner.g(x, y)
    }
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector {
        self.tick(4);
        self.inner.grad_x_g(x, y)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        self.tick(5);
        self.inner.grad_y_g(x, y)
    }
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.tick(6);
        self.inner.hvp_yy_g(x, y, v)
    }
    fn hvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        self.tick(7);
        self.inner.hvp_xy_g(x, y, v)
    }
    fn g_star(&self, x: &Vector) -> Option<f64> {
        self.inner.g_star(x)
    }
    fn hessian_yy_dense(&self, x: &Vector, y: &Vector) -> Option<Matrix> {
        self.inner.hessian_yy_dense(x, y)
    }
    fn optimality_gap(&self, x: &Vector, y: &Vector) -> Option<f64> {
        self.inner.optimality_gap(x, y)
    }
    fn constants(&self) -> ProblemConstants {
        self.inner.constants()
    }
}

/// Human-readable name of a missing capability, for error messages.
pub(crate) fn missing(oracle: &(impl BilevelOracle + ?Sized), what: &str) -> Error {
    Error::Unsupported(String::from(what) + " unavailable for " + oracle.name())
}
