//! The one-dimensional nonconvex-PL toy problem.
//!
//! `f(x, y) = x² + y₁ − sin y₂`, `g(x, y) = ½ (x + y₁ − sin y₂)²` with
//! `x ∈ ℝ`, `y ∈ ℝ²`. Every `y` with `x + y₁ = sin y₂` is a lower-level
//! minimizer, `g* ≡ 0`, and the global bilevel solutions are `x = 0.5`,
//! `0.5 + y₁ − sin y₂ = 0`.

use crate::linalg::{Matrix, Vector};
use crate::oracle::{BilevelOracle, ProblemConstants};

#[derive(Debug, Clone, Copy, Default)]
pub struct Example1Problem;

/// Closed-form derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Example1Derivatives {
    pub grad_y_g: [f64; 2],
    pub hess_yy_g: [[f64; 2]; 2],
    /// `∇²_yx g`, a column of length 2.
    pub jac_yx_g: [f64; 2],
    pub grad_x_f: f64,
    pub grad_y_f: [f64; 2],
}

#[inline]
fn residual(x: f64, y: &[f64]) -> f64 {
    x + y[0] - libm::sin(y[1])
}

pub fn example1_derivatives(x: f64, y: &[f64]) -> Example1Derivatives {
    let r = residual(x, y);
    let (s, c) = (libm::sin(y[1]), libm::cos(y[1]));
    Example1Derivatives {
        grad_y_g: [r, -r * c],
        hess_yy_g: [[1.0, -c], [-c, c * c + s * r]],
        jac_yx_g: [1.0, -c],
        grad_x_f: 2.0 * x,
        grad_y_f: [1.0, -c],
    }
}

/// `‖x − 0.5‖² + ‖0.5 + y₁ − sin y₂‖²`
pub fn example1_optimality_gap(x: f64, y: &[f64]) -> f64 {
    let dx = x - 0.5;
    let r = 0.5 + y[0] - libm::sin(y[1]);
    dx * dx + r * r
}

impl BilevelOracle for Example1Problem {
    fn name(&self) -> &str {
        "example1"
    }
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        2
    }

    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        x[0] * x[0] + y[0] - libm::sin(y[1])
    }
    fn grad_x_f(&self, x: &Vector, _y: &Vector) -> Vector {
        Vector::new(alloc::vec![2.0 * x[0]])
    }
    fn grad_y_f(&self, _x: &Vector, y: &Vector) -> Vector {
        Vector::new(alloc::vec![1.0, -libm::cos(y[1])])
    }

    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        let r = residual(x[0], y);
        0.5 * r * r
    }
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector {
        Vector::new(alloc::vec![residual(x[0], y)])
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        Vector::from_slice(&example1_derivatives(x[0], y).grad_y_g)
    }
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let h = example1_derivatives(x[0], y).hess_yy_g;
        Vector::new(alloc::vec![
            h[0][0] * v[0] + h[0][1] * v[1],
            h[1][0] * v[0] + h[1][1] * v[1],
        ])
    }
    fn hvp_xy_g(&self, _x: &Vector, y: &Vector, v: &Vector) -> Vector {
        Vector::new(alloc::vec![v[0] - libm::cos(y[1]) * v[1]])
    }

    fn g_star(&self, _x: &Vector) -> Option<f64> {
        Some(0.0)
    }
    fn hessian_yy_dense(&self, x: &Vector, y: &Vector) -> Option<Matrix> {
        let h = example1_derivatives(x[0], y).hess_yy_g;
        Matrix::from_rows(&[&h[0], &h[1]]).ok()
    }
    fn optimality_gap(&self, x: &Vector, y: &Vector) -> Option<f64> {
        Some(example1_optimality_gap(x[0], y))
    }
    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            mu_g: Some(1.0),
            ..ProblemConstants::default()
        }
    }
}
