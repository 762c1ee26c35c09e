//! Synthetic data hyper-cleaning with a binary linear classifier.
//!
//! Upper variables `x ∈ ℝ^{n_tr}` weight training samples through a sigmoid;
//! lower variables `y ∈ ℝ^{p+1}` are classifier weights plus bias.
//!
//! ```text
//! g(x, y) = (1/n_tr)  Σ_tr  σ(x_i) · CE(y; u_i, v_i)
//! f(x, y) = (1/n_val) Σ_val CE(y; u_i, v_i)
//! ```
//!
//! with the logistic loss `CE(y; u, v) = log(1 + e^z) − v z`, `z = yᵀ(u, 1)`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{Matrix, Vector};
use crate::oracle::BilevelOracle;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct HypercleanParams {
    pub n_tr: usize,
    pub n_val: usize,
    pub p: usize,
    /// Fraction of training labels flipped.
    pub p_c: f64,
    /// Norm of each class mean; the clusters sit at `±mean`.
    pub separation: f64,
    pub seed: u64,
}

impl Default for HypercleanParams {
    fn default() -> Self {
        Self {
            n_tr: 100,
            n_val: 100,
            p: 10,
            p_c: 0.5,
            separation: 1.5,
            seed: 0,
        }
    }
}

/// A labelled sample set; features carry a trailing bias entry of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn logits(&self, y: &Vector) -> Vec<f64> {
        (0..self.len()).map(|i| dot(self.features.row(i), y)).collect()
    }

    /// Mean logistic loss.
    pub fn mean_loss(&self, y: &Vector) -> f64 {
        let z = self.logits(y);
        z.iter()
            .zip(&self.labels)
            .map(|(&z, &v)| softplus(z) - v * z)
            .sum::<f64>()
            / self.len() as f64
    }

    /// Fraction of samples whose predicted class matches the label.
    pub fn accuracy(&self, y: &Vector) -> f64 {
        let z = self.logits(y);
        let hits = z
            .iter()
            .zip(&self.labels)
            .filter(|(&z, &v)| (z > 0.0) == (v > 0.5))
            .count();
        hits as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticHypercleanProblem {
    pub train: Dataset,
    pub val: Dataset,
    /// Training labels before corruption.
    pub clean_train_labels: Vec<f64>,
    /// Sorted indices of corrupted training samples.
    pub flipped: Vec<usize>,
    pub params: HypercleanParams,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

fn sample_set(rng: &mut rng::ChaCha8Rng, n: usize, mean: &Vector) -> (Matrix, Vec<f64>) {
    let p = mean.len();
    let mut data = Vec::with_capacity(n * (p + 1));
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = if rng::uniform(rng, 0.0, 1.0) < 0.5 {
            0.0
        } else {
            1.0
        };
        let sign = 2.0 * label - 1.0;
        for j in 0..p {
            data.push(sign * mean[j] + rng::standard_normal(rng));
        }
        data.push(1.0);
        labels.push(label);
    }
    (
        Matrix::from_row_major(n, p + 1, data).expect("sized by construction"),
        labels,
    )
}

/// Two Gaussian clusters at `±mean` with identity covariance, balanced
/// labels in expectation, and exactly `round(p_c · n_tr)` training labels
/// flipped. Validation labels are clean.
pub fn generate_hyperclean_data(params: &HypercleanParams) -> Result<SyntheticHypercleanProblem> {
    let HypercleanParams {
        n_tr,
        n_val,
        p,
        p_c,
        separation,
        seed,
    } = *params;
    if n_tr == 0 || n_val == 0 || p == 0 {
        return Err(invalid("hyperclean-syn dimensions must be positive"));
    }
    if !(0.0..1.0).contains(&p_c) {
        return Err(invalid("corruption rate must lie in [0, 1)"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(invalid("separation must be finite and nonnegative"));
    }
    let mut rng = rng::seeded(seed);
    let mean = rng::unit_vector(&mut rng, p).scale(separation);
    let (train_x, clean) = sample_set(&mut rng, n_tr, &mean);
    let (val_x, val_labels) = sample_set(&mut rng, n_val, &mean);

    let n_flip = libm::round(p_c * n_tr as f64) as usize;
    let flipped = rng::sample_indices(&mut rng, n_tr, n_flip.min(n_tr));
    let mut labels = clean.clone();
    for &i in &flipped {
        labels[i] = 1.0 - labels[i];
    }
    Ok(SyntheticHypercleanProblem {
        train: Dataset {
            features: train_x,
            labels,
        },
        val: Dataset {
            features: val_x,
            labels: val_labels,
        },
        clean_train_labels: clean,
        flipped,
        params: params.clone(),
    })
}

impl SyntheticHypercleanProblem {
    /// Mean `σ(x_i)` over corrupted and over clean training indices.
    pub fn weight_split(&self, x: &Vector) -> (f64, f64) {
        let mut is_flipped = alloc::vec![false; self.train.len()];
        for &i in &self.flipped {
            is_flipped[i] = true;
        }
        let (mut sc, mut nc, mut sk, mut nk) = (0.0, 0usize, 0.0, 0usize);
        for (i, &flag) in is_flipped.iter().enumerate() {
            let w = sigmoid(x[i]);
            if flag {
                sc += w;
                nc += 1;
            } else {
                sk += w;
                nk += 1;
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        (mean(sc, nc), mean(sk, nk))
    }

    pub fn validation_loss(&self, y: &Vector) -> f64 {
        self.val.mean_loss(y)
    }

    /// Per-sample `(s_i − v_i, s_i(1 − s_i), CE_i)` on the training set.
    fn train_terms(&self, y: &Vector) -> Vec<(f64, f64, f64)> {
        self.train
            .logits(y)
            .into_iter()
            .zip(&self.train.labels)
            .map(|(z, &v)| {
                let s = sigmoid(z);
                (s - v, s * (1.0 - s), softplus(z) - v * z)
            })
            .collect()
    }
}

impl BilevelOracle for SyntheticHypercleanProblem {
    fn name(&self) -> &str {
        "hyperclean-syn"
    }
    fn dim_x(&self) -> usize {
        self.train.len()
    }
    fn dim_y(&self) -> usize {
        self.train.features.cols()
    }

    fn f(&self, _x: &Vector, y: &Vector) -> f64 {
        self.val.mean_loss(y)
    }
    fn grad_x_f(&self, _x: &Vector, _y: &Vector) -> Vector {
        Vector::zeros(self.dim_x())
    }
    fn grad_y_f(&self, _x: &Vector, y: &Vector) -> Vector {
        let n = self.val.len() as f64;
        let mut out = Vector::zeros(self.dim_y());
        for (i, z) in self.val.logits(y).into_iter().enumerate() {
            let coef = (sigmoid(z) - self.val.labels[i]) / n;
            for (o, u) in out.iter_mut().zip(self.val.features.row(i)) {
                *o += coef * u;
            }
        }
        out
    }

    fn g(&self, x: &Vector, y: &Vector) -> f64 {
        let n = self.train.len() as f64;
        self.train_terms(y)
            .iter()
            .enumerate()
            .map(|(i, t)| sigmoid(x[i]) * t.2)
            .sum::<f64>()
            / n
    }
    fn grad_x_g(&self, x: &Vector, y: &Vector) -> Vector {
        let n = self.train.len() as f64;
        self.train_terms(y)
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = sigmoid(x[i]);
                s * (1.0 - s) * t.2 / n
            })
            .collect()
    }
    fn grad_y_g(&self, x: &Vector, y: &Vector) -> Vector {
        let n = self.train.len() as f64;
        let mut out = Vector::zeros(self.dim_y());
        for (i, t) in self.train_terms(y).iter().enumerate() {
            let coef = sigmoid(x[i]) * t.0 / n;
            for (o, u) in out.iter_mut().zip(self.train.features.row(i)) {
                *o += coef * u;
            }
        }
        out
    }
    fn hvp_yy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let n = self.train.len() as f64;
        let mut out = Vector::zeros(self.dim_y());
        for (i, t) in self.train_terms(y).iter().enumerate() {
            let row = self.train.features.row(i);
            let coef = sigmoid(x[i]) * t.1 * dot(row, v) / n;
            for (o, u) in out.iter_mut().zip(row) {
                *o += coef * u;
            }
        }
        out
    }
    fn hvp_xy_g(&self, x: &Vector, y: &Vector, v: &Vector) -> Vector {
        let n = self.train.len() as f64;
        self.train_terms(y)
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = sigmoid(x[i]);
                s * (1.0 - s) * t.0 * dot(self.train.features.row(i), v) / n
            })
            .collect()
    }

    fn hessian_yy_dense(&self, x: &Vector, y: &Vector) -> Option<Matrix> {
        let n = self.train.len() as f64;
        let d = self.dim_y();
        let mut h = Matrix::zeros(d, d);
        for (i, t) in self.train_terms(y).iter().enumerate() {
            let row = self.train.features.row(i);
            let coef = sigmoid(x[i]) * t.1 / n;
            for a in 0..d {
                for b in 0..d {
                    h[(a, b)] += coef * row[a] * row[b];
                }
            }
        }
        Some(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p_c: f64, seed: u64) -> HypercleanParams {
        HypercleanParams {
            p_c,
            seed,
            ..HypercleanParams::default()
        }
    }

    #[test]
    fn no_corruption_no_flips() {
        let prob = generate_hyperclean_data(&params(0.0, 1)).unwrap();
        assert!(prob.flipped.is_empty());
        assert_eq!(prob.train.labels, prob.clean_train_labels);
    }

    #[test]
    fn exact_flip_count() {
        let prob = generate_hyperclean_data(&params(0.5, 3)).unwrap();
        assert_eq!(prob.flipped.len(), 50);
        for &i in &prob.flipped {
            assert_eq!(prob.train.labels[i], 1.0 - prob.clean_train_labels[i]);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_hyperclean_data(&params(0.3, 8)).unwrap();
        let b = generate_hyperclean_data(&params(0.3, 8)).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.flipped, b.flipped);
    }

    #[test]
    fn rejects_bad_rate() {
        assert!(generate_hyperclean_data(&params(1.0, 0)).is_err());
        assert!(generate_hyperclean_data(&params(-0.1, 0)).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
    }
}
