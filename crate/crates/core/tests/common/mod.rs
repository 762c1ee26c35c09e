#![allow(dead_code)]

use galet_core::linalg::Vector;
use galet_core::problems::{
    generate_hyperclean_data, Example1Problem, HypercleanParams, LstsqParams, ScQuadParams,
    SingularLstsqProblem, StronglyConvexQuadProblem,
};
use galet_core::rng;
use galet_core::BilevelOracle;

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_slice(xs)
}

/// Uniform points in `[lo, hi]^(dx + dy)`.
pub fn box_points(
    oracle: &dyn BilevelOracle,
    n: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Vec<(Vector, Vector)> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let x = rng::uniform_vector(&mut r, oracle.dim_x(), lo, hi);
            let y = rng::uniform_vector(&mut r, oracle.dim_y(), lo, hi);
            (x, y)
        })
        .collect()
}

pub fn all_problems() -> Vec<Box<dyn BilevelOracle>> {
    vec![
        Box::new(Example1Problem),
        Box::new(SingularLstsqProblem::generate(&LstsqParams::default()).unwrap()),
        Box::new(StronglyConvexQuadProblem::generate(&ScQuadParams::default()).unwrap()),
        Box::new(generate_hyperclean_data(&HypercleanParams::default()).unwrap()),
    ]
}
