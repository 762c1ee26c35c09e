//! Independent brute-force oracles for validating the solver and metrics.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::linalg::{numerical_rank, smallest_nonzero_singular_value, Vector, DEFAULT_SV_TOL};
use crate::metrics::minimal_norm_w;
use crate::oracle::{hessian_yy, jacobian_xy, missing, BilevelOracle};
use crate::solver::w_increment_pl;

/// Default feasibility band `g ≤ tol` for grid search.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-3;

/// Evenly spaced samples `lo, …, hi` (inclusive) along one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        let a = Self { lo, hi, steps };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        if self.steps < 2 || !(self.lo < self.hi) {
            return Err(invalid("grid axis needs steps >= 2 and lo < hi"));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.steps - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    /// The same axis repeated `dims` times.
    pub fn cube(lo: f64, hi: f64, steps: usize, dims: usize) -> Result<Self> {
        let axis = Axis::new(lo, hi, steps)?;
        Ok(Self {
            axes: alloc::vec![axis; dims],
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.axes.iter().try_for_each(Axis::validate)
    }
}

/// Best feasible grid point for the toy problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub x: f64,
    pub y: [f64; 2],
    pub f: f64,
    pub g: f64,
    /// Linear grid index, used as a deterministic tie-breaker.
    pub index: usize,
    pub feasible_points: usize,
}

impl GridOptimum {
    /// Min-reduction used to merge partial results: lower `f`, then lower index.
    pub fn merge(a: Option<Self>, b: Option<Self>) -> Option<Self> {
        match (a, b) {
            (None, b) => b,
            (a, None) => a,
            (Some(a), Some(b)) => {
                let feasible_points = a.feasible_points + b.feasible_points;
                let best = if (b.f, b.index) < (a.f, a.index) { b } else { a };
                Some(Self {
                    feasible_points,
                    ..best
                })
            }
        }
    }
}

/// Enumerates the grid slab whose `x` indices lie in `x_range`, keeping
/// points with `g ≤ feasibility_tol` and returning the one minimizing `f`.
pub fn brute_force_example1_slab(
    grid: &GridSpec,
    feasibility_tol: f64,
    x_range: Range<usize>,
) -> Result<Option<GridOptimum>> {
    grid.validate()?;
    let [ax, a1, a2] = match grid.axes.as_slice() {
        [a, b, c] => [*a, *b, *c],
        _ => {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: grid.axes.len(),
            })
        }
    };
    let sin2: Vec<f64> = (0..a2.steps).map(|k| libm::sin(a2.point(k))).collect();
    let mut best: Option<GridOptimum> = None;
    let mut feasible = 0usize;
    for i in x_range.start..x_range.end.min(ax.steps) {
        let x = ax.point(i);
        for j in 0..a1.steps {
            let y1 = a1.point(j);
            for (k, &s) in sin2.iter().enumerate() {
                let r = x + y1 - s;
                let g = 0.5 * r * r;
                if !(g <= feasibility_tol) {
                    continue;
                }
                feasible += 1;
                let f = x * x + y1 - s;
                let index = (i * a1.steps + j) * a2.steps + k;
                if best.is_none_or(|b| (f, index) < (b.f, b.index)) {
                    best = Some(GridOptimum {
                        x,
                        y: [y1, a2.point(k)],
                        f,
                        g,
                        index,
                        feasible_points: 0,
                    });
                }
            }
        }
    }
    Ok(best.map(|b| GridOptimum {
        feasible_points: feasible,
        ..b
    }))
}

/// Grid search for the toy problem's bilevel optimum: minimize `f` over grid
/// points with `g ≤ feasibility_tol`. Pass `f64::INFINITY` to ignore `g`.
pub fn brute_force_example1(grid: &GridSpec, feasibility_tol: f64) -> Result<GridOptimum> {
    let steps = grid.axes.first().map_or(0, |a| a.steps);
    brute_force_example1_slab(grid, feasibility_tol, 0..steps)?.ok_or_else(|| {
        Error::Empty(alloc::format!(
            "no grid point with g <= {feasibility_tol}; refine the grid or raise the tolerance"
        ))
    })
}

/// Distance of the `w` iterates to `w†`, with the geometric decay check.
#[derive(Debug, Clone, PartialEq)]
pub struct WDecayReport {
    /// `(t, ‖w_t − w†‖)` for `t = 0..=t_max`.
    pub errors: Vec<(usize, f64)>,
    /// Smallest nonzero singular value of `∇²_yy g`.
    pub lambda_hat: f64,
    /// `1 − ρ λ̂²`
    pub bound_factor: f64,
    /// Largest ratio `e_{t+1} / e_t` over steps whose error is above roundoff.
    pub max_ratio: f64,
    pub monotone: bool,
}

impl WDecayReport {
    pub fn within_bound(&self) -> bool {
        self.max_ratio <= self.bound_factor + 1e-6
    }

    pub fn final_error(&self) -> f64 {
        self.errors.last().map_or(f64::NAN, |e| e.1)
    }
}

/// Runs the PL `w` iteration from zero and records the distance to the
/// pseudoinverse solution at every step.
pub fn w_gd_vs_pinv<O: BilevelOracle + ?Sized>(
    oracle: &O,
    x: &Vector,
    y: &Vector,
    rho: f64,
    t_max: usize,
) -> Result<WDecayReport> {
    let h = oracle
        .hessian_yy_dense(x, y)
        .ok_or_else(|| missing(oracle, "dense Hessian"))?;
    let w_dagger = minimal_norm_w(oracle, x, y)?;
    let lambda_hat = smallest_nonzero_singular_value(&h, DEFAULT_SV_TOL)?;
    // below this, roundoff in w† (about 1e-15) moves a step ratio by more
    // than the 1e-6 tolerance
    let floor = 1e-8 * (1.0 + w_dagger.norm());

    let mut w = Vector::zeros(oracle.dim_y());
    let mut errors = Vec::with_capacity(t_max + 1);
    errors.push((0, w.dist(&w_dagger)));
    let (mut max_ratio, mut monotone) = (0.0f64, true);
    for t in 1..=t_max {
        let d = w_increment_pl(oracle, x, y, &w);
        w.axpy(-rho, &d);
        let e = w.dist(&w_dagger);
        let prev = errors[t - 1].1;
        if prev > floor {
            max_ratio = max_ratio.max(e / prev);
            if e > prev {
                monotone = false;
            }
        }
        errors.push((t, e));
    }
    Ok(WDecayReport {
        errors,
        lambda_hat,
        bound_factor: 1.0 - rho * lambda_hat * lambda_hat,
        max_ratio,
        monotone,
    })
}

/// Numerical ranks of `[∇²_yy g, ∇²_yx g]` and `∇²_yy g` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReport {
    pub rank_joint: usize,
    pub rank_hessian: usize,
}

/// Ranks at relative tolerance `1e-9 · σ_max`, assembling dense blocks from
/// HVPs when the problem provides no dense form.
pub fn rank_probe<O: BilevelOracle + ?Sized>(
    oracle: &O,
    points: &[(Vector, Vector)],
) -> Result<Vec<RankReport>> {
    points
        .iter()
        .map(|(x, y)| {
            let h = hessian_yy(oracle, x, y);
            let jyx = jacobian_xy(oracle, x, y).transpose();
            Ok(RankReport {
                rank_joint: numerical_rank(&h.hstack(&jyx)?, DEFAULT_SV_TOL)?,
                rank_hessian: numerical_rank(&h, DEFAULT_SV_TOL)?,
            })
        })
        .collect()
}
