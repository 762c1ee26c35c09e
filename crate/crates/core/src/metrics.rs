//! Stationarity residuals and related diagnostics.
//!
//! The residual triple measures how far `(x, y, w)` is from satisfying the
//! gradient-based optimality system of a PL bilevel problem:
//!
//! ```text
//! R_x = ‖∇_x f + ∇²_xy g · w‖²
//! R_w = ‖∇²_yy g (∇_y f + ∇²_yy g · w)‖²
//! R_y = g(x, y) − g*(x)
//! ```

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{matvec, pseudoinverse, Vector, DEFAULT_SV_TOL};
use crate::oracle::{missing, BilevelOracle};

/// Number of gradient steps used to approximate `g*` when no closed form exists.
pub const APPROX_G_STAR_STEPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTriple {
    pub r_x: f64,
    pub r_w: f64,
    /// `None` when neither a closed-form nor an approximate `g*` was used.
    pub r_y: Option<f64>,
    /// `r_y` was computed against an approximate value function.
    pub r_y_approx: bool,
}

impl ResidualTriple {
    /// Largest available residual.
    pub fn max(&self) -> f64 {
        self.r_x.max(self.r_w).max(self.r_y.unwrap_or(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.r_x.is_finite() && self.r_w.is_finite() && self.r_y.is_none_or(f64::is_finite)
    }
}

/// How `R_y` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GStarMode {
    /// Closed-form `g*` only; `R_y` is unavailable otherwise.
    #[default]
    Exact,
    /// Fall back to gradient descent from the current `y` when no closed form
    /// exists.
    ApproximateFallback { steps: usize },
}

/// `∇_x f + ∇²_xy g · w`
pub fn ul_direction<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, w: &Vector) -> Vector {
    oracle.grad_x_f(x, y).add(&oracle.hvp_xy_g(x, y, w))
}

/// `∇²_yy g (∇_y f + ∇²_yy g · w)`
pub fn w_gradient<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, w: &Vector) -> Vector {
    let inner = oracle.grad_y_f(x, y).add(&oracle.hvp_yy_g(x, y, w));
    oracle.hvp_yy_g(x, y, &inner)
}

/// The residual triple with `R_y` from the closed-form value function, if any.
pub fn residuals<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    w: &Vector,
) -> ResidualTriple {
    residuals_with(oracle, x, y, w, GStarMode::Exact)
}

pub fn residuals_with<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    w: &Vector,
    mode: GStarMode,
) -> ResidualTriple {
    let r_x = ul_direction(oracle, x, y, w).norm_sq();
    let r_w = w_gradient(oracle, x, y, w).norm_sq();
    let g = oracle.g(x, y);
    let (r_y, r_y_approx) = match (oracle.g_star(x), mode) {
        (Some(gs), _) => (Some((g - gs).max(0.0)), false),
        (None, GStarMode::ApproximateFallback { steps }) => {
            (Some((g - approx_g_star(oracle, x, y, steps)).max(0.0)), true)
        }
        (None, GStarMode::Exact) => (None, false),
    };
    ResidualTriple {
        r_x,
        r_w,
        r_y,
        r_y_approx,
    }
}

/// Power-iteration estimate of `‖∇²_yy g(x, y)‖₂`.
pub fn estimate_hessian_norm<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    iters: usize,
) -> f64 {
    let n = oracle.dim_y();
    let mut v = Vector::new(alloc::vec![1.0 / libm::sqrt(n as f64); n]);
    let mut est = 0.0;
    for _ in 0..iters {
        let hv = oracle.hvp_yy_g(x, y, &v);
        est = hv.norm();
        if !(est > 0.0) || !est.is_finite() {
            break;
        }
        v = hv.scale(1.0 / est);
    }
    est
}

/// Approximates `g*(x)` by `steps` gradient steps on `g(x, ·)` from `y` with
/// stepsize `1/ℓ̂`, where `ℓ̂` is a power-iteration estimate of the Hessian
/// norm at `y`. Returns the smallest value seen, so the result never exceeds
/// `g(x, y)`.
pub fn approx_g_star<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, steps: usize) -> f64 {
    let l = estimate_hessian_norm(oracle, x, y, 30).max(1e-12);
    let step = 1.0 / l;
    let mut cur = y.clone();
    let mut best = oracle.g(x, &cur);
    for _ in 0..steps {
        let grad = oracle.grad_y_g(x, &cur);
        cur.axpy(-step, &grad);
        let v = oracle.g(x, &cur);
        if !v.is_finite() {
            break;
        }
        best = best.min(v);
    }
    best
}

/// Stationarity score of the value-function reformulation:
/// `‖∇_x f‖² + ‖∇_y f‖² + (g − g*)`.
pub fn val_kkt_score<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector) -> Result<f64> {
    let g_star = oracle.g_star(x).ok_or_else(|| missing(oracle, "g*"))?;
    Ok(oracle.grad_x_f(x, y).norm_sq() + oracle.grad_y_f(x, y).norm_sq() + (oracle.g(x, y) - g_star))
}

/// `w† = −(∇²_yy g)† ∇_y f`, the minimal-norm minimizer of
/// `½‖∇_y f + ∇²_yy g · w‖²`.
pub fn minimal_norm_w<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector) -> Result<Vector> {
    let h = oracle
        .hessian_yy_dense(x, y)
        .ok_or_else(|| missing(oracle, "dense Hessian"))?;
    let pinv = pseudoinverse(&h, DEFAULT_SV_TOL)?;
    Ok(matvec(&pinv, &oracle.grad_y_f(x, y))?.scale(-1.0))
}

/// `F(x, y; w†) + c (g − g*)` with `F(x, y; w) = f + wᵀ∇_y g`.
pub fn lyapunov_value<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, c: f64) -> Result<f64> {
    if !(c >= 0.0) {
        return Err(invalid("lyapunov weight c must be nonnegative"));
    }
    let g_star = oracle.g_star(x).ok_or_else(|| missing(oracle, "g*"))?;
    let w = minimal_norm_w(oracle, x, y)?;
    let shadow = oracle.f(x, y) + w.dot(&oracle.grad_y_g(x, y));
    Ok(shadow + c * (oracle.g(x, y) - g_star))
}

/// Least-squares power-law fit of a running average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub k_range: (usize, usize),
}

/// Default burn-in: ignore the first 10% of iterations.
pub fn default_k_min(k_max: usize) -> usize {
    (k_max / 10).max(1)
}

/// Fits `log A_k = intercept + slope · log k` over `k ≥ k_min`, where `A_k`
/// is the running average of the series values up to and including `k`.
///
/// `k` values must be strictly increasing and start at 1 or later; values
/// must be finite and nonnegative.
pub fn fit_rate(series: &[(usize, f64)], k_min: usize) -> Result<RateFit> {
    if k_min < 1 {
        return Err(invalid("k_min must be at least 1"));
    }
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut sum = 0.0;
    let mut prev_k = 0usize;
    let mut range = (usize::MAX, 0usize);
    for (idx, &(k, v)) in series.iter().enumerate() {
        if k == 0 || (idx > 0 && k <= prev_k) {
            return Err(invalid("series k must be >= 1 and strictly increasing"));
        }
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::NonFinite(alloc::format!("series value {v} at k = {k}")));
        }
        prev_k = k;
        sum += v;
        let avg = sum / (idx + 1) as f64;
        if k >= k_min && avg > 0.0 {
            points.push((libm::log(k as f64), libm::log(avg)));
            range = (range.0.min(k), range.1.max(k));
        }
    }
    if points.len() < 3 {
        return Err(invalid("fewer than 3 points after filtering"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    // A flat series is fit exactly.
    let r_squared = if syy <= f64::EPSILON * n * (1.0 + my * my) {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        k_range: range,
    })
}
