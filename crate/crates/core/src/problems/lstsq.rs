//! Overparameterized linear lower level with a singular Hessian.
//!
//! `g(x, y) = ½‖Ay − Bx‖²` with a wide `A` (`m_rows < d_y`), so `∇²_yy g =
//! AᵀA` is singular and PSD; `g` is PL with `μ_g = σ_min(A)²`. `B = A·C`
//! keeps `Bx` in the range of `A`, hence `g*(x) = 0` exactly.
//! `f(x, y) = ½‖y − y_target‖² + ½‖x‖²`.

use crate::error::{invalid, Result};
use crate::linalg::{cholesky_solve, matvec, pseudoinverse, Matrix, Vector, DEFAULT_SV_TOL};
use crate::oracle::{BilevelOracle, ProblemConstants};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqParams {
    pub m_rows: usize,
    pub d_y: usize,
    pub d_x: usize,
    /// Singular values of `A` are drawn uniformly from `[sv_lo, sv_hi]`.
    pub sv_lo: f64,
    pub sv_hi: f64,
    pub seed: u64,
}

impl Default for LstsqParams {
    fn default() -> Self {
        Self {
            m_rows: 3,
            d_y: 6,
            d_x: 2,
            sv_lo: 1.0,
            sv_hi: 1.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingularLstsqProblem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub y_target: Vector,
    pub seed: u64,
    ata: Matrix,
    bta: Matrix,
    singular_values: alloc::vec::Vec<f64>,
    x_star: Vector,
}

impl SingularLstsqProblem {
    pub fn generate(params: &LstsqParams) -> Result<Self> {
        let LstsqParams {
            m_rows,
            d_y,
            d_x,
            sv_lo,
            sv_hi,
            seed,
        } = *params;
        if m_rows == 0 || d_x == 0 || m_rows >= d_y {
            return Err(invalid("singular-lstsq needs 0 < m_rows < d_y and d_x > 0"));
        }
        if !(sv_lo > 0.0 && sv_hi >= sv_lo) {
            return Err(invalid("singular-lstsq needs 0 < sv_lo <= sv_hi"));
        }
        let mut rng = rng::seeded(seed);
        let u = rng::orthonormal_columns(&mut rng, m_rows, m_rows);
        let v = rng::orthonormal_columns(&mut rng, d_y, m_rows);
        let mut s: alloc::vec::Vec<f64> = (0..m_rows)
            .map(|_| rng::uniform(&mut rng, sv_lo, sv_hi))
            .collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let a = u.matmul(&Matrix::diag(&s))?.matmul(&v.transpose())?;
        let c = rng::normal_matrix(&mut rng, d_y, d_x);
        let y_target = rng::normal_vector(&mut rng, d_y);
        Self::from_parts(a, c, y_target, seed)
    }

    /// Builds the problem from `A`, the generator `C` (so `B = A·C`) and the
    /// upper-level target.
    pub fn from_parts(a: Matrix, c: Matrix, y_target: Vector, seed: u64) -> Result<Self> {
        if c.rows() != a.cols() || y_target.len() != a.cols() || a.rows() >= a.cols() {
            return Err(invalid("singular-lstsq parts have inconsistent shapes"));
        }
        let b = a.matmul(&c)?;
        let ata = a.transpose().matmul(&a)?;
        let bta = b.transpose().matmul(&a)?;
        let singular_values = crate::linalg::singular_values(&a)?;

        // Global solution: minimize ½‖R(Cx − y_t)‖² + ½‖x‖² with R = A⁺A.
        let r = pseudoinverse(&a, DEFAULT_SV_TOL)?.matmul(&a)?;
        let ct = c.transpose();
        let mut normal = ct.matmul(&r)?.matmul(&c)?;
        for i in 0..normal.rows() {
            normal[(i, i)] += 1.0;
        }
        let rhs = matvec(&ct.matmul(&r)?, &y_target)?;
        let x_star = cholesky_solve(&normal, &rhs)?;

        Ok(Self {
            a,
            b,
            c,
            y_target,
            seed,
            ata,
            bta,
            singular_values,
            x_star,
        })
    }

    pub fn x_star(&self) -> &Vector {
        &self.x_star
    }

    /// Nonzero singular values of `A`, decreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    fn lower_residual(&self, x: &Vector, y: &Vector) -> Vector {
        matvec(&self.a, y)
            .expect("y has d_y entries")
            .sub(&matvec(&self.b, x).expect("x has d_x entries"))
    }
}

impl BilevelOracle for SingularLstsqProblem {
    fn name(&self) -> &str {
        "singular-lstsq"
    }
    fn dim_x(&self) -> usize {
        self.b.cols()
    }
    fn dim_y(&self) -> usize {
        self.a.cols()
    }

    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * y.sub(&self.y_target).norm_sq() + 0.5 * x.norm_sq()
    }
    fn grad_x_f(&self, x: &Vector, _y: &Vector) -> Vector {
        x.clone()
    }
    fn grad_y_f(&self, _x: &Vector, y: &Vector) -> Vector {
        y.sub(&self.y_target)
    }

    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * self.lower_residual(x, y).norm_sq()
    }
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector {
        let r = self.lower_residual(x, y);
        matvec(&self.b.transpose(), &r).unwrap().scale(-1.0)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        let r = self.lower_residual(x, y);
        matvec(&self.a.transpose(), &r).unwrap()
    }
    fn hvp_yy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        matvec(&self.ata, v).unwrap()
    }
    fn hvp_xy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        matvec(&self.bta, v).unwrap().scale(-1.0)
    }

    fn g_star(&self, _x: &Vector) -> Option<f64> {
        Some(0.0)
    }
    fn hessian_yy_dense(&self, _x: &Vector, _y: &Vector) -> Option<Matrix> {
        Some(self.ata.clone())
    }
    /// `‖x − x*‖² + ‖Ay − Bx‖²`
    fn optimality_gap(&self, x: &Vector, y: &Vector) -> Option<f64> {
        Some(x.sub(&self.x_star).norm_sq() + self.lower_residual(x, y).norm_sq())
    }
    fn constants(&self) -> ProblemConstants {
        let smax = self.singular_values[0];
        let smin = *self.singular_values.last().unwrap();
        ProblemConstants {
            mu_g: Some(smin * smin),
            lambda_g: Some(smin * smin),
            l_f1: Some(1.0),
            l_g1: Some(smax * smax),
            ..ProblemConstants::default()
        }
    }
}
