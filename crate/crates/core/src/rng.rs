//! Seeded random sampling.
//!
//! All randomness flows from a `ChaCha8Rng` seeded with `seed_from_u64`.
//! Uniforms are `rng.gen::<f64>()` (53 high bits scaled to [0, 1)); standard
//! normals use the Box–Muller transform on two such uniforms, consuming them
//! in pairs and returning the cosine branch only, so a port needs nothing but
//! the ChaCha8 stream.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, Vector};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    (0..n).map(|_| standard_normal(rng)).collect()
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vector {
    (0..n).map(|_| uniform(rng, lo, hi)).collect()
}

/// Uniformly distributed unit vector.
pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = normal_vector(rng, n);
        let norm = v.norm();
        if norm > 1e-12 {
            return v.scale(1.0 / norm);
        }
    }
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| standard_normal(rng)).collect();
    Matrix::from_row_major(rows, cols, data).expect("sized by construction")
}

/// `n × k` matrix with orthonormal columns (Gram–Schmidt on Gaussian columns).
pub fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Matrix {
    assert!(k <= n);
    let mut basis: Vec<Vector> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = normal_vector(rng, n);
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = v.dot(b);
                v.axpy(-c, b);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v.scale(1.0 / norm));
        }
    }
    Matrix::from_columns(n, &basis).expect("sized by construction")
}

/// `count` distinct indices from `0..n`, sorted ascending (partial Fisher–Yates).
pub fn sample_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    assert!(count <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut out = pool[..count].to_vec();
    out.sort_unstable();
    out
}
