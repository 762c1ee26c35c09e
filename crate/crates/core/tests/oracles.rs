//! Derivative checks, metric invariants and frozen oracle values.

mod common;

use common::{all_problems, box_points, v};
use galet_core::linalg::{matvec, numerical_rank, Matrix, Vector, DEFAULT_FD_STEP, DEFAULT_SV_TOL};
use galet_core::metrics::{fit_rate, minimal_norm_w, residuals, val_kkt_score};
use galet_core::oracle::{check_pl_inequality, fd_verify, BilevelOracle};
use galet_core::problems::{
    example1_derivatives, scq_hypergradient, Example1Problem, LstsqParams, ScQuadParams,
    SingularLstsqProblem, StronglyConvexQuadProblem,
};
use galet_core::verify::{brute_force_example1, GridSpec};
use galet_core::{rng, Error};

#[test]
fn fd_verify_all_problems() {
    for prob in all_problems() {
        let prob = prob.as_ref();
        let pts = box_points(prob, 100, -3.0, 3.0, 42);
        let rep = fd_verify(prob, &pts, DEFAULT_FD_STEP, 1e-5, 7).unwrap();
        assert!(rep.passed(), "{}: {:?}", prob.name(), rep);
    }
}

/// A problem whose upper level is constant and lower level quadratic.
struct ConstantF;

impl BilevelOracle for ConstantF {
    fn name(&self) -> &str {
        "constant-f"
    }
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_y(&self) -> usize {
        2
    }
    fn f(&self, _x: &Vector, _y: &Vector) -> f64 {
        3.25
    }
    fn grad_x_f(&self, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn grad_y_f(&self, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(2)
    }
    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        0.5 * y.sub(x).norm_sq()
    }
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector {
        x.sub(y)
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        y.sub(x)
    }
    fn hvp_yy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        v.clone()
    }
    fn hvp_xy_g(&self, _x: &Vector, _y: &Vector, v: &Vector) -> Vector {
        v.scale(-1.0)
    }
    fn g_star(&self, _x: &Vector) -> Option<f64> {
        Some(0.0)
    }
}

#[test]
fn fd_verify_degenerate_problems() {
    let pts = box_points(&ConstantF, 50, -3.0, 3.0, 1);
    let rep = fd_verify(&ConstantF, &pts, DEFAULT_FD_STEP, 1e-5, 2).unwrap();
    assert_eq!(rep.grad_x_f, 0.0);
    assert_eq!(rep.grad_y_f, 0.0);
    assert!(rep.hvp_yy_g <= 1e-8);

    // quadratic lower level: FD of a linear gradient is exact to roundoff
    let q = StronglyConvexQuadProblem::generate(&ScQuadParams::default()).unwrap();
    for step in [1e-2, 1e-4, 1e-6] {
        let pts = box_points(&q, 20, -3.0, 3.0, 3);
        let rep = fd_verify(&q, &pts, step, 1e-5, 4).unwrap();
        assert!(rep.hvp_yy_g <= 1e-8, "step {step}: {}", rep.hvp_yy_g);
    }
}

#[test]
fn pl_inequality_examples() {
    let p = Example1Problem;
    let at = [(v(&[1.0]), v(&[0.0, 0.0]))];
    let r = check_pl_inequality(&p, 1.0, &at).unwrap();
    assert_eq!((r[0].lhs, r[0].rhs, r[0].pass), (2.0, 1.0, true));
    let r = check_pl_inequality(&p, 10.0, &at).unwrap();
    assert_eq!((r[0].lhs, r[0].rhs, r[0].pass), (2.0, 10.0, false));

    let y2: f64 = 2.2;
    let opt = [(v(&[0.1]), v(&[y2.sin() - 0.1, y2]))];
    let r = check_pl_inequality(&p, 1.0, &opt).unwrap();
    assert!(r[0].lhs < 1e-30 && r[0].rhs.abs() < 1e-30 && r[0].pass);

    let hc = galet_core::problems::generate_hyperclean_data(&Default::default()).unwrap();
    let pts = box_points(&hc, 1, -1.0, 1.0, 0);
    assert!(matches!(
        check_pl_inequality(&hc, 1.0, &pts),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn pl_holds_on_singular_lstsq_with_exact_constant() {
    let p = SingularLstsqProblem::generate(&LstsqParams::default()).unwrap();
    let mu = p.constants().mu_g.unwrap();
    let pts = box_points(&p, 1000, -3.0, 3.0, 9);
    assert!(check_pl_inequality(&p, mu, &pts).unwrap().iter().all(|c| c.pass));
}

#[test]
fn scq_hypergradient_matches_fd_at_random_points() {
    let p = StronglyConvexQuadProblem::generate(&ScQuadParams {
        d_x: 2,
        d_y: 3,
        seed: 21,
        ..ScQuadParams::default()
    })
    .unwrap();
    let mut r = rng::seeded(22);
    for _ in 0..100 {
        let x = rng::uniform_vector(&mut r, 2, -3.0, 3.0);
        let fd =
            galet_core::linalg::central_diff_grad(|xp| p.f(xp, &p.solution(xp).unwrap()), &x, 1e-5).unwrap();
        let hg = scq_hypergradient(&p, &x).unwrap();
        assert!(hg.dist(&fd) <= 1e-6 * fd.norm().max(1.0));
    }
}

#[test]
fn example1_hessian_rank_one_on_solution_set() {
    let mut r = rng::seeded(3);
    for _ in 0..50 {
        let x = rng::uniform(&mut r, -3.0, 3.0);
        let y2 = rng::uniform(&mut r, -3.0, 3.0);
        let y = [y2.sin() - x, y2];
        let d = example1_derivatives(x, &y);
        let h = Matrix::from_rows(&[&d.hess_yy_g[0], &d.hess_yy_g[1]]).unwrap();
        assert_eq!(numerical_rank(&h, DEFAULT_SV_TOL).unwrap(), 1);
        assert_eq!(d.jac_yx_g, [d.hess_yy_g[0][0], d.hess_yy_g[1][0]]);
    }
}

#[test]
fn lstsq_hessian_rank_matches_a() {
    let p = SingularLstsqProblem::generate(&LstsqParams {
        seed: 4,
        ..LstsqParams::default()
    })
    .unwrap();
    for (x, y) in box_points(&p, 20, -3.0, 3.0, 1) {
        assert_eq!(p.g_star(&x), Some(0.0));
        let h = p.hessian_yy_dense(&x, &y).unwrap();
        assert_eq!(numerical_rank(&h, DEFAULT_SV_TOL).unwrap(), 3);
    }
}

#[test]
fn r_x_ignores_null_space_shift_of_w_dagger() {
    for seed in 0..5 {
        let p = SingularLstsqProblem::generate(&LstsqParams {
            seed,
            ..LstsqParams::default()
        })
        .unwrap();
        // null space of A: I − A⁺A applied to random vectors
        let a_pinv = galet_core::linalg::pseudoinverse(&p.a, DEFAULT_SV_TOL).unwrap();
        let proj = a_pinv.matmul(&p.a).unwrap();
        for (x, y) in box_points(&p, 10, -3.0, 3.0, seed + 100) {
            let w = minimal_norm_w(&p, &x, &y).unwrap();
            let z = Vector::from_slice(&y.iter().map(|a| a.cos()).collect::<Vec<_>>());
            let n = z.sub(&matvec(&proj, &z).unwrap());
            assert!(matvec(&p.a, &n).unwrap().max_abs() < 1e-12);
            let r0 = residuals(&p, &x, &y, &w).r_x;
            let r1 = residuals(&p, &x, &y, &w.add(&n.scale(5.0))).r_x;
            assert!((r0 - r1).abs() <= 1e-10 * (1.0 + r0));
        }
    }
}

#[test]
fn minimal_norm_w_solves_normal_equations() {
    for prob in all_problems() {
        let prob = prob.as_ref();
        for (x, y) in box_points(prob, 100, -3.0, 3.0, 77) {
            let w = minimal_norm_w(prob, &x, &y).unwrap();
            let r = residuals(prob, &x, &y, &w);
            let fy = prob.grad_y_f(&x, &y).norm_sq();
            let h = prob.hessian_yy_dense(&x, &y).unwrap();
            // relative to the Hessian scale, which is far from 1 for some problems
            let scale = 1.0 + fy * h.norm().powi(2).max(1.0);
            assert!(r.r_w <= 1e-12 * scale, "{}: r_w = {}", prob.name(), r.r_w);
        }
    }
}

#[test]
fn val_kkt_dominates_r_y() {
    for prob in all_problems() {
        let prob = prob.as_ref();
        for (x, y) in box_points(prob, 200, -3.0, 3.0, 8) {
            if let Ok(s) = val_kkt_score(prob, &x, &y) {
                let ry = residuals(prob, &x, &y, &Vector::zeros(prob.dim_y())).r_y.unwrap();
                assert!(s >= ry - 1e-12);
            }
        }
    }
}

/// Least-squares slope of (log k, log y_k) computed directly, independent of
/// `fit_rate`'s streaming implementation.
fn ols_slope(ks: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[test]
fn fit_rate_on_harmonic_series() {
    // value_k = 7/k: running average is 7 H_k / k.
    let series: Vec<(usize, f64)> = (1..=1000).map(|k| (k, 7.0 / k as f64)).collect();
    let fit = fit_rate(&series, 100).unwrap();
    let ks: Vec<f64> = (100..=1000).map(|k| k as f64).collect();
    let avgs: Vec<f64> = (100..=1000)
        .map(|k| 7.0 * (1..=k).map(|j| 1.0 / j as f64).sum::<f64>() / k as f64)
        .collect();
    let oracle = ols_slope(&ks, &avgs);
    assert!((fit.slope - oracle).abs() < 1e-9, "{} vs {}", fit.slope, oracle);
    assert!((-1.3..=-0.7).contains(&fit.slope));
    assert!(fit.r_squared >= 0.999);
}

#[test]
fn fit_rate_on_geometric_series() {
    let series: Vec<(usize, f64)> = (1..=1000).map(|k| (k, 0.5f64.powi(k as i32))).collect();
    let fit = fit_rate(&series, 100).unwrap();
    assert!((fit.slope + 1.0).abs() < 1e-9);
    assert!(fit.slope <= -0.7);
}

#[test]
fn brute_force_refines_toward_half() {
    let mut prev = f64::INFINITY;
    for steps in [31, 61, 121] {
        let grid = GridSpec::cube(-3.0, 3.0, steps, 3).unwrap();
        let best = brute_force_example1(&grid, 1e-3).unwrap();
        let spacing = 6.0 / (steps - 1) as f64;
        let err = (best.x - 0.5).abs();
        assert!(err <= spacing + 1e-12, "steps {steps}: x = {}", best.x);
        assert!(
            err <= prev / 2.0 + 1e-12 || err <= spacing / 2.0,
            "steps {steps}: {err} vs {prev}"
        );
        prev = err;
    }
}
