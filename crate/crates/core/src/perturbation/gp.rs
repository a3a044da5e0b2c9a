use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::RbfKernel;
use crate::error::{Error, Result};

/// Covariance matrix `K_ij = k(s_i, s_j)`.
pub fn rbf_matrix(points: &[f64], kernel: &RbfKernel) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| kernel.cov(points[i], points[j]))
}

/// Lower Cholesky factor of a jittered RBF covariance.
#[derive(Debug, Clone)]
pub struct GpFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

const FIRST_JITTER: f64 = 1e-8;
const LAST_JITTER: f64 = 1e-2;

impl GpFactor {
    /// Factor `K + jitter I`, starting at 1e-8 sigma^2 and growing tenfold up
    /// to 1e-2 sigma^2. Returns `None` when the variance is zero.
    pub fn new(points: &[f64], kernel: &RbfKernel) -> Result<Option<Self>> {
        kernel.validate()?;
        if kernel.variance == 0.0 || points.is_empty() {
            return Ok(None);
        }
        let base = rbf_matrix(points, kernel);
        let mut rel = FIRST_JITTER;
        loop {
            let jitter = rel * kernel.variance;
            let mut k = base.clone();
            for i in 0..points.len() {
                k[(i, i)] += jitter;
            }
            if let Some(chol) = k.cholesky() {
                return Ok(Some(GpFactor {
                    lower: chol.unpack(),
                    jitter,
                }));
            }
            if rel >= LAST_JITTER * (1.0 - 1e-9) {
                return Err(Error::CovarianceFactorizationFailure { jitter });
            }
            rel *= 10.0;
        }
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `L z` for a standard normal vector drawn from `rng`.
    pub fn draw_deviation<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample(StandardNormal)),
        );
        &self.lower * z
    }

    /// `L^T w`: the loading of the weighted average `w^T (L z)` on `z`.
    pub fn loading(&self, weights: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(weights);
        (self.lower.transpose() * w).as_slice().to_vec()
    }
}

/// One draw from `MVN(mean_values, K(points, points))`.
pub fn sample_gp<R: Rng + ?Sized>(
    mean_values: &[f64],
    points: &[f64],
    kernel: &RbfKernel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if mean_values.len() != points.len() {
        return Err(Error::LengthMismatch {
            what: "mean values and points",
            left: mean_values.len(),
            right: points.len(),
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyGroup("GP evaluation points"));
    }
    match GpFactor::new(points, kernel)? {
        None => Ok(mean_values.to_vec()),
        Some(factor) => {
            let dev = factor.draw_deviation(rng);
            Ok(mean_values
                .iter()
                .zip(dev.iter())
                .map(|(m, d)| m + d)
                .collect())
        }
    }
}
