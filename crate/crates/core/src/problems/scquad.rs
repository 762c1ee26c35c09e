//! Strongly convex quadratic lower level with a closed-form hypergradient.
//!
//! `g(x, y) = ½ yᵀQy + (Px)ᵀy + rᵀy` with `Q ≻ 0`, so
//! `S(x) = {−Q⁻¹(Px + r)}`. The upper level is a general quadratic
//! `f(x, y) = ½ xᵀF_xx x + xᵀF_xy y + ½ yᵀF_yy y + a_xᵀx + a_yᵀy`.

use crate::error::{invalid, Result};
use crate::linalg::{cholesky, cholesky_solve, matvec, singular_values, Matrix, Vector};
use crate::oracle::{BilevelOracle, ProblemConstants};
use crate::rng;

#[derive(Debug, Clone)]
pub struct StronglyConvexQuadProblem {
    pub q: Matrix,
    /// `d_y × d_x`
    pub p: Matrix,
    pub r: Vector,
    pub f_xx: Matrix,
    /// `d_x × d_y`
    pub f_xy: Matrix,
    pub f_yy: Matrix,
    pub a_x: Vector,
    pub a_y: Vector,
    q_eigs: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScQuadParams {
    pub d_x: usize,
    pub d_y: usize,
    /// Eigenvalues of `Q` are drawn uniformly from `[eig_lo, eig_hi]`.
    pub eig_lo: f64,
    pub eig_hi: f64,
    pub seed: u64,
}

impl Default for ScQuadParams {
    fn default() -> Self {
        Self {
            d_x: 2,
            d_y: 3,
            eig_lo: 1.0,
            eig_hi: 2.0,
            seed: 0,
        }
    }
}

impl StronglyConvexQuadProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: Matrix,
        p: Matrix,
        r: Vector,
        f_xx: Matrix,
        f_xy: Matrix,
        f_yy: Matrix,
        a_x: Vector,
        a_y: Vector,
    ) -> Result<Self> {
        let (dy, dx) = (q.rows(), p.cols());
        let shapes_ok = q.cols() == dy
            && p.rows() == dy
            && r.len() == dy
            && f_xx.rows() == dx
            && f_xx.cols() == dx
            && f_xy.rows() == dx
            && f_xy.cols() == dy
            && f_yy.rows() == dy
            && f_yy.cols() == dy
            && a_x.len() == dx
            && a_y.len() == dy;
        if !shapes_ok {
            return Err(invalid("sc-quad parts have inconsistent shapes"));
        }
        if q.sub(&q.transpose())?.norm() > 1e-12 * (1.0 + q.norm()) {
            return Err(invalid("Q must be symmetric"));
        }
        cholesky(&q)?;
        let s = singular_values(&q)?;
        let q_eigs = (*s.last().unwrap(), s[0]);
        Ok(Self {
            q,
            p,
            r,
            f_xx,
            f_xy,
            f_yy,
            a_x,
            a_y,
            q_eigs,
        })
    }

    /// Random instance: `Q = U diag(λ) Uᵀ`, Gaussian `P`, `r`, `F_xy`, linear
    /// terms, `F_xx = I`, `F_yy = I`.
    pub fn generate(params: &ScQuadParams) -> Result<Self> {
        let ScQuadParams {
            d_x,
            d_y,
            eig_lo,
            eig_hi,
            seed,
        } = *params;
        if d_x == 0 || d_y == 0 || !(eig_lo > 0.0 && eig_hi >= eig_lo) {
            return Err(invalid(
                "sc-quad needs positive dimensions and 0 < eig_lo <= eig_hi",
            ));
        }
        let mut rng = rng::seeded(seed);
        let u = rng::orthonormal_columns(&mut rng, d_y, d_y);
        let lam: alloc::vec::Vec<f64> = (0..d_y).map(|_| rng::uniform(&mut rng, eig_lo, eig_hi)).collect();
        let mut q = u.matmul(&Matrix::diag(&lam))?.matmul(&u.transpose())?;
        // exact symmetry
        for i in 0..d_y {
            for j in 0..i {
                let m = 0.5 * (q[(i, j)] + q[(j, i)]);
                q[(i, j)] = m;
                q[(j, i)] = m;
            }
        }
        let p = rng::normal_matrix(&mut rng, d_y, d_x);
        let r = rng::normal_vector(&mut rng, d_y);
        let f_xy = rng::normal_matrix(&mut rng, d_x, d_y).scale(0.5);
        let a_x = rng::normal_vector(&mut rng, d_x);
        let a_y = rng::normal_vector(&mut rng, d_y);
        Self::new(
            q,
            p,
            r,
            Matrix::identity(d_x),
            f_xy,
            Matrix::identity(d_y),
            a_x,
            a_y,
        )
    }

    /// `f = ½‖y‖²`, `g = ½‖y‖² − xᵀy` (so `S(x) = x`).
    pub fn tracking(d: usize) -> Self {
        Self::new(
            Matrix::identity(d),
            Matrix::identity(d).scale(-1.0),
            Vector::zeros(d),
            Matrix::zeros(d, d),
            Matrix::zeros(d, d),
            Matrix::identity(d),
            Vector::zeros(d),
            Vector::zeros(d),
        )
        .expect("identity instance is valid")
    }

    /// The unique lower-level solution `−Q⁻¹(Px + r)`.
    pub fn solution(&self, x: &Vector) -> Result<Vector> {
        let rhs = matvec(&self.p, x)?.add(&self.r);
        Ok(cholesky_solve(&self.q, &rhs)?.scale(-1.0))
    }

    /// Smallest and largest eigenvalue of `Q`.
    pub fn q_eigenvalues(&self) -> (f64, f64) {
        self.q_eigs
    }
}

/// `∇_x f(x, S(x)) − Pᵀ Q⁻¹ ∇_y f(x, S(x))`, the gradient of `x ↦ f(x, S(x))`.
pub fn scq_hypergradient(problem: &StronglyConvexQuadProblem, x: &Vector) -> Result<Vector> {
    let y = problem.solution(x)?;
    let gx = problem.grad_x_f(x, &y);
    let z = cholesky_solve(&problem.q, &problem.grad_y_f(x, &y))?;
    Ok(gx.sub(&matvec(&problem.p.transpose(), &z)?))
}

impl BilevelOracle for StronglyConvexQuadProblem {
    fn name(&self) -> &str {
        "sc-quad"
    }
    fn dim_x(&self) -> usize {
        self.p.cols()
    }
    fn dim_y(&self) -> usize {
        self.q.rows()
    }

    fn f(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * x.dot(&matvec(&self.f_xx, x).unwrap())
            + x.dot(&matvec(&self.f_xy, y).unwrap())
            + 0.5 * y.dot(&matvec(&self.f_yy, y).unwrap())
            + self.a_x.dot(x)
            + self.a_y.dot(y)
    }
    fn grad_x_f(&self, x: &Vector, y: &Vector) -> Vector {
        matvec(&self.f_xx, x)
            .unwrap()
            .add(&matvec(&self.f_xy, y).unwrap())
            .add(&self.a_x)
    }
    fn grad_y_f(&self, x: &Vector, y: &Vector) -> Vector {
        matvec(&self.f_xy.transpose(), x)
            .unwrap()
            .add(&matvec(&self.f_yy, y).unwrap())
            .add(&self.a_y)
    }

    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * y.dot(&matvec(&self.q, y).unwrap()) + matvec(&self.p, x).unwrap().dot(y) + self.r.dot(y)
    }
    fn grad_x_g(&self, _x: &Vector, y: &Vector) -> Vector {
        matvec(&self.p.transpose(), y).unwrap()
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        matvec(&self.q, y)
            .unwrap()
            .add(&matvec(&self.p, x).unwrap())
            .add(&self.r)
    }
    fn hvp_yy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        matvec(&self.q, v).unwrap()
    }
    fn hvp_xy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        matvec(&self.p.transpose(), v).unwrap()
    }

    fn g_star(&self, x: &Vector) -> Option<f64> {
        let b = matvec(&self.p, x).ok()?.add(&self.r);
        let z = cholesky_solve(&self.q, &b).ok()?;
        Some(-0.5 * b.dot(&z))
    }
    fn hessian_yy_dense(&self, _x: &Vector, _y: &Vector) -> Option<Matrix> {
        Some(self.q.clone())
    }
    fn constants(&self) -> ProblemConstants {
        let (lo, hi) = self.q_eigs;
        ProblemConstants {
            mu_g: Some(lo),
            lambda_g: Some(lo),
            l_g1: Some(hi),
            ..ProblemConstants::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::central_diff_grad;

    #[test]
    fn tracking_hypergradient_is_x() {
        let p = StronglyConvexQuadProblem::tracking(3);
        let x = Vector::new(alloc::vec![0.3, -1.0, 2.5]);
        let hg = scq_hypergradient(&p, &x).unwrap();
        assert!(hg.dist(&x) < 1e-14);
    }

    #[test]
    fn stationary_at_origin_by_symmetry() {
        let p = StronglyConvexQuadProblem::tracking(2);
        let hg = scq_hypergradient(&p, &Vector::zeros(2)).unwrap();
        assert_eq!(hg.max_abs(), 0.0);
    }

    #[test]
    fn hypergradient_matches_fd_of_reduced_objective() {
        let p = StronglyConvexQuadProblem::generate(&ScQuadParams {
            d_x: 2,
            d_y: 3,
            seed: 11,
            ..ScQuadParams::default()
        })
        .unwrap();
        let x = Vector::new(alloc::vec![0.7, -0.2]);
        let fd = central_diff_grad(|xp| p.f(xp, &p.solution(xp).unwrap()), &x, 1e-5).unwrap();
        let hg = scq_hypergradient(&p, &x).unwrap();
        assert!(hg.dist(&fd) <= 1e-6 * fd.norm().max(1.0));
    }

    #[test]
    fn rejects_indefinite_q() {
        let q = Matrix::diag(&[1.0, -1.0]);
        let err = StronglyConvexQuadProblem::new(
            q,
            Matrix::zeros(2, 1),
            Vector::zeros(2),
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 2),
            Matrix::identity(2),
            Vector::zeros(1),
            Vector::zeros(2),
        );
        assert!(err.is_err());
    }

    #[test]
    fn value_function_matches_solution() {
        let p = StronglyConvexQuadProblem::generate(&ScQuadParams::default()).unwrap();
        let x = Vector::new(alloc::vec![1.0, 2.0]);
        let y = p.solution(&x).unwrap();
        assert!((p.g(&x, &y) - p.g_star(&x).unwrap()).abs() < 1e-12);
    }
}
