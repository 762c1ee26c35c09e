//! The alternating solver.
//!
//! Each outer iteration `k` takes `N` gradient steps on the lower level,
//! `T` gradient steps on the shadow implicit gradient `w` (restarted from
//! zero), and one upper-level step along
//! `d_x = ∇_x f(x, y⁺) + ∇²_xy g(x, y⁺) · w⁺`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error};
use crate::linalg::Vector;
use crate::metrics::{self, GStarMode, ResidualTriple};
use crate::oracle::BilevelOracle;

/// Iterate norm beyond which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Increment used for the `w` iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WVariant {
    /// `∇²_yy g (∇_y f + ∇²_yy g w)`, gradient of `½‖∇_y f + ∇²_yy g w‖²`.
    #[default]
    Pl,
    /// `∇_y f + ∇²_yy g w`, the strongly-convex shortcut.
    Sc,
}

impl WVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pl => "pl",
            Self::Sc => "sc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "pl" => Some(Self::Pl),
            "sc" => Some(Self::Sc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaletConfig {
    /// Upper-level stepsize.
    pub alpha: f64,
    /// Lower-level stepsize.
    pub beta: f64,
    /// Shadow implicit gradient stepsize.
    pub rho: f64,
    /// Lower-level steps per outer iteration.
    pub n_inner: usize,
    /// `w` steps per outer iteration.
    pub t_inner: usize,
    /// Outer iterations.
    pub k_outer: usize,
    pub w_variant: WVariant,
    /// Start each `w` solve from the previous `w` instead of zero.
    pub w_warm_start: bool,
    /// Stop once every available residual is at or below this value.
    pub stop_tol: Option<f64>,
}

impl Default for GaletConfig {
    /// α = 0.3, β = 1, ρ = 0.1, N = 1, T = 1, K = 1000.
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 1.0,
            rho: 0.1,
            n_inner: 1,
            t_inner: 1,
            k_outer: 1000,
            w_variant: WVariant::Pl,
            w_warm_start: false,
            stop_tol: None,
        }
    }
}

impl GaletConfig {
    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("rho", self.rho)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(alloc::format!(
                    "{name} must be a positive finite stepsize, got {v}"
                )));
            }
        }
        if self.n_inner < 1 || self.t_inner < 1 {
            return Err(invalid("n_inner and t_inner must be at least 1"));
        }
        if let Some(tol) = self.stop_tol {
            if !(tol >= 0.0) {
                return Err(invalid("stop_tol must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Diagnostics collected alongside the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub g_star_mode: GStarMode,
    /// Record `b_k = ‖w^{k+1} − w†(x^k, y^{k+1})‖` (needs a dense Hessian).
    pub record_b_k: bool,
    /// Record residuals at the post-update triple `(x^k, y^{k+1}, w^{k+1})`.
    pub record_post_update: bool,
    /// Record the Lyapunov value with this weight.
    pub lyapunov_c: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            g_star_mode: GStarMode::Exact,
            record_b_k: false,
            record_post_update: false,
            lyapunov_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vector,
    pub y: Vector,
    pub w: Vector,
    pub k: usize,
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Residuals at `(x^k, y^k, w^k)`.
    pub residuals: ResidualTriple,
    /// `‖d_x^k‖²`
    pub dx_norm_sq: f64,
    pub val_kkt_score: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub b_k: Option<f64>,
    pub post_update: Option<ResidualTriple>,
    pub lyapunov: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Stopped early after iteration `k` met `stop_tol`.
    Converged {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaletRun {
    pub final_iterate: Iterate,
    pub trace: Vec<TraceRecord>,
    pub status: RunStatus,
}

/// A run that left the finite region; carries everything recorded so far.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub k: usize,
    pub reason: String,
    pub last_finite: Iterate,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("diverged at outer iteration {}: {}", .0.k, .0.reason)]
    Diverged(Box<Divergence>),
}

fn diverged(k: usize, reason: &str, x: &Vector, y: &Vector, w: &Vector) -> SolverError {
    SolverError::Diverged(Box::new(Divergence {
        k,
        reason: String::from(reason),
        last_finite: Iterate {
            x: x.clone(),
            y: y.clone(),
            w: w.clone(),
            k,
        },
        trace: Vec::new(),
    }))
}

fn out_of_bounds(v: &Vector) -> bool {
    !v.is_finite() || v.norm() > DIVERGENCE_THRESHOLD
}

/// One lower-level gradient step `y − β ∇_y g(x, y)`.
pub fn ll_step<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    beta: f64,
) -> Result<Vector, SolverError> {
    let grad = oracle.grad_y_g(x, y);
    if !grad.is_finite() {
        return Err(diverged(
            0,
            "non-finite lower-level gradient",
            x,
            y,
            &Vector::zeros(y.len()),
        ));
    }
    let mut next = y.clone();
    next.axpy(-beta, &grad);
    Ok(next)
}

fn increment_with<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    grad_y_f: &Vector,
    w: &Vector,
    variant: WVariant,
) -> Vector {
    let inner = grad_y_f.add(&oracle.hvp_yy_g(x, y, w));
    match variant {
        WVariant::Pl => oracle.hvp_yy_g(x, y, &inner),
        WVariant::Sc => inner,
    }
}

/// `∇²_yy g (∇_y f + ∇²_yy g w)`: two HVPs, no dense Hessian.
pub fn w_increment_pl<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, w: &Vector) -> Vector {
    increment_with(oracle, x, y, &oracle.grad_y_f(x, y), w, WVariant::Pl)
}

/// `∇_y f + ∇²_yy g w`: one HVP.
pub fn w_increment_sc<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, w: &Vector) -> Vector {
    increment_with(oracle, x, y, &oracle.grad_y_f(x, y), w, WVariant::Sc)
}

/// Runs `T` steps of `w ← w − ρ · increment` from `w_start` (zero unless the
/// config asks for a warm start and one is supplied). Returns the final `w`
/// and the number of steps taken.
pub fn w_solve<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    config: &GaletConfig,
    w_start: Option<&Vector>,
) -> Result<(Vector, usize), SolverError> {
    if config.t_inner < 1 {
        return Err(invalid("t_inner must be at least 1").into());
    }
    let mut w = match (config.w_warm_start, w_start) {
        (true, Some(w0)) => w0.clone(),
        _ => Vector::zeros(oracle.dim_y()),
    };
    let grad_y_f = oracle.grad_y_f(x, y);
    for t in 0..config.t_inner {
        let d = increment_with(oracle, x, y, &grad_y_f, &w, config.w_variant);
        let prev = w.clone();
        w.axpy(-config.rho, &d);
        if out_of_bounds(&w) {
            let mut err = diverged(0, "shadow implicit gradient left the finite region", x, y, &prev);
            if let SolverError::Diverged(d) = &mut err {
                d.reason = alloc::format!("{} after {} w-steps", d.reason, t + 1);
            }
            return Err(err);
        }
    }
    Ok((w, config.t_inner))
}

/// `∇_x f + ∇²_xy g w`
pub fn ul_increment<O: BilevelOracle + ?Sized>(oracle: &O, x: &Vector, y: &Vector, w: &Vector) -> Vector {
    metrics::ul_direction(oracle, x, y, w)
}

/// Result of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub x_next: Vector,
    pub y_next: Vector,
    pub w_next: Vector,
    pub dx: Vector,
}

/// One outer iteration from `(x, y)`; `w_prev` is only read for warm starts.
pub fn galet_step<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    w_prev: &Vector,
    config: &GaletConfig,
) -> Result<StepOutput, SolverError> {
    let mut y_next = y.clone();
    for _ in 0..config.n_inner {
        y_next = ll_step(oracle, x, &y_next, config.beta)?;
    }
    if out_of_bounds(&y_next) {
        return Err(diverged(
            0,
            "lower-level iterate left the finite region",
            x,
            y,
            w_prev,
        ));
    }
    let (w_next, _) = w_solve(oracle, x, &y_next, config, Some(w_prev))?;
    let dx = ul_increment(oracle, x, &y_next, &w_next);
    let mut x_next = x.clone();
    x_next.axpy(-config.alpha, &dx);
    if out_of_bounds(&x_next) {
        return Err(diverged(
            0,
            "upper-level iterate left the finite region",
            x,
            y,
            w_prev,
        ));
    }
    Ok(StepOutput {
        x_next,
        y_next,
        w_next,
        dx,
    })
}

/// Runs the solver for `config.k_outer` outer iterations with wall time
/// fixed at zero.
pub fn galet_run<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x0: &Vector,
    y0: &Vector,
    config: &GaletConfig,
    options: &RunOptions,
) -> Result<GaletRun, SolverError> {
    galet_run_with_clock(oracle, x0, y0, config, options, &|| 0.0)
}

/// As [`galet_run`], reading elapsed milliseconds from `clock`.
pub fn galet_run_with_clock<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x0: &Vector,
    y0: &Vector,
    config: &GaletConfig,
    options: &RunOptions,
    clock: &dyn Fn() -> f64,
) -> Result<GaletRun, SolverError> {
    config.validate()?;
    if x0.len() != oracle.dim_x() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim_x(),
            got: x0.len(),
        }
        .into());
    }
    if y0.len() != oracle.dim_y() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim_y(),
            got: y0.len(),
        }
        .into());
    }
    let start = clock();
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut w = Vector::zeros(oracle.dim_y());
    let mut trace = Vec::with_capacity(config.k_outer);

    for k in 0..config.k_outer {
        let residuals = metrics::residuals_with(oracle, &x, &y, &w, options.g_star_mode);
        let val_kkt_score = metrics::val_kkt_score(oracle, &x, &y).ok();
        let optimality_gap = oracle.optimality_gap(&x, &y);
        let lyapunov = options
            .lyapunov_c
            .and_then(|c| metrics::lyapunov_value(oracle, &x, &y, c).ok());

        let step = match galet_step(oracle, &x, &y, &w, config) {
            Ok(s) => s,
            Err(SolverError::Diverged(mut d)) => {
                d.k = k;
                d.last_finite = Iterate { x, y, w, k };
                d.trace = trace;
                return Err(SolverError::Diverged(d));
            }
            Err(e) => return Err(e),
        };

        let b_k = if options.record_b_k {
            metrics::minimal_norm_w(oracle, &x, &step.y_next)
                .ok()
                .map(|w_dagger| step.w_next.dist(&w_dagger))
        } else {
            None
        };
        let post_update = options
            .record_post_update
            .then(|| metrics::residuals_with(oracle, &x, &step.y_next, &step.w_next, options.g_star_mode));

        trace.push(TraceRecord {
            k,
            residuals,
            dx_norm_sq: step.dx.norm_sq(),
            val_kkt_score,
            optimality_gap,
            b_k,
            post_update,
            lyapunov,
            wall_time_ms: clock() - start,
        });

        if !residuals.is_finite() {
            return Err(SolverError::Diverged(Box::new(Divergence {
                k,
                reason: String::from("non-finite residuals"),
                last_finite: Iterate { x, y, w, k },
                trace,
            })));
        }

        x = step.x_next;
        y = step.y_next;
        w = step.w_next;

        if let Some(tol) = config.stop_tol {
            if residuals.max() <= tol {
                return Ok(GaletRun {
                    final_iterate: Iterate { x, y, w, k: k + 1 },
                    trace,
                    status: RunStatus::Converged { k },
                });
            }
        }
    }

    Ok(GaletRun {
        final_iterate: Iterate {
            x,
            y,
            w,
            k: config.k_outer,
        },
        trace,
        status: RunStatus::Completed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_solve;
    use crate::metrics::minimal_norm_w;
    use crate::problems::{Example1Problem, StronglyConvexQuadProblem};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn ll_step_examples() {
        let p = Example1Problem;
        let y = ll_step(&p, &v(&[1.0]), &v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, 1.0]);

        let y2 = 0.4;
        let y_opt = v(&[libm::sin(y2) - 1.0, y2]);
        assert!(ll_step(&p, &v(&[1.0]), &y_opt, 1.0).unwrap().dist(&y_opt) < 1e-15);

        // g = ½‖y‖²: tracking problem at x = 0.
        let q = StronglyConvexQuadProblem::tracking(3);
        let y = ll_step(&q, &Vector::zeros(3), &v(&[1.0, -2.0, 3.0]), 1.0).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn w_increment_examples() {
        let p = Example1Problem;
        let (x, y) = (v(&[1.0]), v(&[0.0, 0.0]));
        let d = w_increment_pl(&p, &x, &y, &Vector::zeros(2));
        assert_eq!(d.as_slice(), &[2.0, -2.0]);
        let w_dagger = minimal_norm_w(&p, &x, &y).unwrap();
        assert!(w_increment_pl(&p, &x, &y, &w_dagger).max_abs() < 1e-10);

        assert_eq!(
            w_increment_sc(&p, &x, &y, &Vector::zeros(2)).as_slice(),
            &[1.0, -1.0]
        );
    }

    #[test]
    fn sc_increment_vanishes_at_exact_w() {
        let q = StronglyConvexQuadProblem::generate(&Default::default()).unwrap();
        let (x, y) = (v(&[0.3, 0.7]), v(&[1.0, 0.0, -1.0]));
        let w = cholesky_solve(&q.q, &q.grad_y_f(&x, &y)).unwrap().scale(-1.0);
        assert!(w_increment_sc(&q, &x, &y, &w).max_abs() < 1e-12);
    }

    #[test]
    fn one_w_step() {
        let p = Example1Problem;
        let cfg = GaletConfig {
            t_inner: 1,
            rho: 0.1,
            ..GaletConfig::default()
        };
        let (w, used) = w_solve(&p, &v(&[1.0]), &v(&[0.0, 0.0]), &cfg, None).unwrap();
        assert_eq!(used, 1);
        assert!(w.dist(&v(&[-0.2, 0.2])) < 1e-15);
    }

    #[test]
    fn zero_t_rejected() {
        let cfg = GaletConfig {
            t_inner: 0,
            ..GaletConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(w_solve(&Example1Problem, &v(&[0.0]), &v(&[0.0, 0.0]), &cfg, None).is_err());
    }

    #[test]
    fn ul_increment_examples() {
        let p = Example1Problem;
        let (x, y) = (v(&[1.0]), v(&[0.0, 0.0]));
        assert!((ul_increment(&p, &x, &y, &v(&[-0.5, 0.5]))[0] - 1.0).abs() < 1e-15);
        assert_eq!(ul_increment(&p, &x, &y, &Vector::zeros(2))[0], 2.0);
    }

    #[test]
    fn zero_outer_iterations() {
        let cfg = GaletConfig {
            k_outer: 0,
            ..GaletConfig::default()
        };
        let run = galet_run(
            &Example1Problem,
            &v(&[-3.0]),
            &v(&[2.0, 1.0]),
            &cfg,
            &RunOptions::default(),
        )
        .unwrap();
        assert!(run.trace.is_empty());
        assert_eq!(run.final_iterate.x, v(&[-3.0]));
        assert_eq!(run.final_iterate.y, v(&[2.0, 1.0]));
        assert_eq!(run.final_iterate.w, Vector::zeros(2));
    }

    #[test]
    fn large_beta_diverges_loudly() {
        let cfg = GaletConfig {
            beta: 3.0,
            ..GaletConfig::default()
        };
        match galet_run(
            &Example1Problem,
            &v(&[-3.0]),
            &v(&[2.0, 1.0]),
            &cfg,
            &RunOptions::default(),
        ) {
            Err(SolverError::Diverged(d)) => {
                assert!(d.last_finite.x.is_finite() && d.last_finite.y.is_finite());
                assert_eq!(d.trace.len(), d.k);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn dimension_checked() {
        let err = galet_run(
            &Example1Problem,
            &v(&[0.0, 1.0]),
            &v(&[2.0, 1.0]),
            &GaletConfig::default(),
            &RunOptions::default(),
        );
        assert!(matches!(
            err,
            Err(SolverError::Invalid(Error::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn early_stop() {
        let cfg = GaletConfig {
            rho: 0.5,
            t_inner: 50,
            stop_tol: Some(1e-10),
            ..GaletConfig::default()
        };
        let run = galet_run(
            &Example1Problem,
            &v(&[-3.0]),
            &v(&[2.0, 1.0]),
            &cfg,
            &RunOptions::default(),
        )
        .unwrap();
        match run.status {
            RunStatus::Converged { k } => {
                assert!(k < 1000);
                assert!(run.trace.last().unwrap().residuals.max() <= 1e-10);
            }
            RunStatus::Completed => panic!("did not stop early"),
        }
    }
}
