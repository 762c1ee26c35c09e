//! Property tests for the linear algebra kernel and the oracle contracts.

mod common;

use common::{all_problems, box_points};
use galet_core::linalg::{matvec, pseudoinverse, Matrix, Vector, DEFAULT_SV_TOL};
use galet_core::oracle::hessian_yy;
use proptest::prelude::*;

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (2usize..=8, 2usize..=8, 1usize..=8).prop_flat_map(|(r, c, k)| {
        let k = k.min(r).min(c);
        // product of r×k and k×c factors: rank ≤ k
        (
            prop::collection::vec(-3.0f64..3.0, r * k),
            prop::collection::vec(-3.0f64..3.0, k * c),
        )
            .prop_map(move |(a, b)| {
                let a = Matrix::from_row_major(r, k, a).unwrap();
                let b = Matrix::from_row_major(k, c, b).unwrap();
                a.matmul(&b).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn penrose_identities(m in matrix_strategy()) {
        let p = pseudoinverse(&m, DEFAULT_SV_TOL).unwrap();
        let mpm = m.matmul(&p).unwrap().matmul(&m).unwrap();
        let pmp = p.matmul(&m).unwrap().matmul(&p).unwrap();
        prop_assert!(mpm.sub(&m).unwrap().norm() <= 1e-10 * (1.0 + m.norm()));
        prop_assert!(pmp.sub(&p).unwrap().norm() <= 1e-10 * (1.0 + p.norm()));
        // M P and P M are symmetric
        let mp = m.matmul(&p).unwrap();
        let pm = p.matmul(&m).unwrap();
        prop_assert!(mp.sub(&mp.transpose()).unwrap().norm() <= 1e-10 * (1.0 + mp.norm()));
        prop_assert!(pm.sub(&pm.transpose()).unwrap().norm() <= 1e-10 * (1.0 + pm.norm()));
    }

    #[test]
    fn matvec_is_linear(
        data in prop::collection::vec(-5.0f64..5.0, 12),
        u in prop::collection::vec(-5.0f64..5.0, 4),
        w in prop::collection::vec(-5.0f64..5.0, 4),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let m = Matrix::from_row_major(3, 4, data).unwrap();
        let (u, w) = (Vector::new(u), Vector::new(w));
        let lhs = matvec(&m, &u.scale(a).add(&w.scale(b))).unwrap();
        let rhs = matvec(&m, &u).unwrap().scale(a).add(&matvec(&m, &w).unwrap().scale(b));
        prop_assert!(lhs.dist(&rhs) <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn quadratic_fd_exact(
        q in prop::collection::vec(-2.0f64..2.0, 9),
        p in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let m = Matrix::from_row_major(3, 3, q).unwrap();
        let p = Vector::new(p);
        let field = |z: &Vector| 0.5 * z.dot(&matvec(&m, z).unwrap());
        let fd = galet_core::linalg::central_diff_grad(field, &p, 1e-5).unwrap();
        let exact = matvec(&m, &p).unwrap().add(&matvec(&m.transpose(), &p).unwrap()).scale(0.5);
        prop_assert!(fd.dist(&exact) <= 1e-8);
    }
}

#[test]
fn hvp_symmetry_linearity_and_value_function_bound() {
    for prob in all_problems() {
        let prob = prob.as_ref();
        let pts = box_points(prob, 1000, -3.0, 3.0, 17);
        let dirs = box_points(prob, 1000, -1.0, 1.0, 18);
        for ((x, y), (_, u)) in pts.iter().zip(&dirs) {
            let w = Vector::from_slice(&u.iter().rev().copied().collect::<Vec<_>>());
            let hu = prob.hvp_yy_g(x, y, u);
            let hw = prob.hvp_yy_g(x, y, &w);
            let scale = 1.0 + hu.norm() * w.norm() + hw.norm() * u.norm();
            assert!(
                (u.dot(&hw) - w.dot(&hu)).abs() <= 1e-10 * scale,
                "{} symmetry",
                prob.name()
            );

            let comb = prob.hvp_yy_g(x, y, &u.scale(2.0).add(&w.scale(-0.5)));
            let lin = hu.scale(2.0).add(&hw.scale(-0.5));
            assert!(
                comb.dist(&lin) <= 1e-10 * (1.0 + lin.norm()),
                "{} hvp_yy linearity",
                prob.name()
            );

            let comb = prob.hvp_xy_g(x, y, &u.scale(2.0).add(&w.scale(-0.5)));
            let lin = prob
                .hvp_xy_g(x, y, u)
                .scale(2.0)
                .add(&prob.hvp_xy_g(x, y, &w).scale(-0.5));
            assert!(
                comb.dist(&lin) <= 1e-10 * (1.0 + lin.norm()),
                "{} hvp_xy linearity",
                prob.name()
            );

            if let Some(gs) = prob.g_star(x) {
                let g = prob.g(x, y);
                assert!(g - gs >= -1e-10 * (1.0 + g.abs()), "{} g below g*", prob.name());
            }
        }
    }
}

#[test]
fn dense_hessian_matches_hvp() {
    for prob in all_problems() {
        let prob = prob.as_ref();
        for (x, y) in box_points(prob, 200, -3.0, 3.0, 5) {
            let dense = prob
                .hessian_yy_dense(&x, &y)
                .expect("all shipped problems expose it");
            let v = Vector::from_slice(&y.iter().map(|a| a.sin()).collect::<Vec<_>>());
            let hv = prob.hvp_yy_g(&x, &y, &v);
            let mv = matvec(&dense, &v).unwrap();
            assert!(mv.dist(&hv) <= 1e-10 * (1.0 + hv.norm()), "{}", prob.name());
            // also agrees with column-wise assembly
            let assembled = hessian_yy(prob, &x, &y);
            assert!(assembled.sub(&dense).unwrap().norm() <= 1e-12 * (1.0 + dense.norm()));
        }
    }
}
