use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis for one arm with its anchors fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBasis {
    /// Columns `((s - center) / scale)^j` for `j = 0..degree`.
    Polynomial {
        center: f64,
        scale: f64,
        degree: usize,
    },
    /// Columns `1, sin((s - offset)/B_j) + cos((s - offset)/B_j)`.
    Fourier { offset: f64, periods: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Polynomial,
    Fourier,
}

impl GroupBasis {
    pub fn dim(&self) -> usize {
        match self {
            GroupBasis::Polynomial { degree, .. } => *degree,
            GroupBasis::Fourier { periods, .. } => periods.len() + 1,
        }
    }

    pub fn kind(&self) -> BasisKind {
        match self {
            GroupBasis::Polynomial { .. } => BasisKind::Polynomial,
            GroupBasis::Fourier { .. } => BasisKind::Fourier,
        }
    }

    /// Row of the basis matrix at `s`.
    pub fn row(&self, s: f64) -> Vec<f64> {
        match self {
            GroupBasis::Polynomial {
                center,
                scale,
                degree,
            } => {
                let z = (s - center) / scale;
                let mut out = Vec::with_capacity(*degree);
                let mut p = 1.0;
                for _ in 0..*degree {
                    out.push(p);
                    p *= z;
                }
                out
            }
            GroupBasis::Fourier { offset, periods } => {
                let mut out = Vec::with_capacity(periods.len() + 1);
                out.push(1.0);
                for b in periods {
                    let t = (s - offset) / b;
                    out.push(t.sin() + t.cos());
                }
                out
            }
        }
    }
}

/// `n x d` matrix of basis expansions at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    entries: DMatrix<f64>,
    kind: BasisKind,
}

impl BasisMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// `M^T w`.
    pub fn weighted_column_sums(&self, weights: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(weights);
        (self.entries.transpose() * w).as_slice().to_vec()
    }
}

pub fn basis_matrix(points: &[f64], basis: &GroupBasis) -> BasisMatrix {
    let d = basis.dim();
    let mut entries = DMatrix::zeros(points.len(), d);
    for (i, &s) in points.iter().enumerate() {
        for (j, v) in basis.row(s).into_iter().enumerate() {
            entries[(i, j)] = v;
        }
    }
    BasisMatrix {
        entries,
        kind: basis.kind(),
    }
}

pub(crate) fn check_dims(m: &BasisMatrix, variances: &[f64]) -> Result<()> {
    if m.ncols() != variances.len() {
        return Err(Error::DimensionMismatch {
            expected: m.ncols(),
            found: variances.len(),
        });
    }
    Ok(())
}

/// Draw `beta ~ N(0, diag(variances))` from `rng`.
pub(crate) fn draw_coefficients<R: Rng + ?Sized>(variances: &[f64], rng: &mut R) -> Vec<f64> {
    variances
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v.sqrt() * z
        })
        .collect()
}

/// `mean_values + M beta` with `beta ~ N(0, diag(variances))`.
pub fn sample_basis<R: Rng + ?Sized>(
    mean_values: &[f64],
    m: &BasisMatrix,
    variances: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(m, variances)?;
    if mean_values.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: mean_values.len(),
        });
    }
    if variances.iter().all(|v| *v == 0.0) {
        return Ok(mean_values.to_vec());
    }
    let beta = DVector::from_vec(draw_coefficients(variances, rng));
    let dev = &m.entries * beta;
    Ok(mean_values
        .iter()
        .zip(dev.iter())
        .map(|(a, b)| a + b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRecord;
    use proptest::prelude::*;

    #[test]
    fn polynomial_rows() {
        let b = GroupBasis::Polynomial {
            center: 0.0,
            scale: 1.0,
            degree: 4,
        };
        assert_eq!(b.row(1.0), vec![1.0, 1.0, 1.0, 1.0]);
        let b = GroupBasis::Polynomial {
            center: 1.0,
            scale: 2.0,
            degree: 4,
        };
        assert_eq!(b.row(3.0), vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(b.row(-1.0), vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn fourier_row_at_offset() {
        let b = GroupBasis::Fourier {
            offset: 2.5,
            periods: vec![0.3, 1.0, 7.0],
        };
        assert_eq!(b.row(2.5), vec![1.0, 1.0, 1.0, 1.0]);
        let m = basis_matrix(&[2.5, 3.0], &b);
        assert_eq!(m.nrows(), 2);
        assert_eq!(m.ncols(), 4);
        assert!((0..2).all(|i| m.entries()[(i, 0)] == 1.0));
    }

    #[test]
    fn zero_sigma_returns_mean() {
        let b = GroupBasis::Polynomial {
            center: 0.0,
            scale: 1.0,
            degree: 3,
        };
        let m = basis_matrix(&[0.0, 1.0, 2.0], &b);
        let out = sample_basis(
            &[1.0, 2.0, 3.0],
            &m,
            &[0.0; 3],
            &mut SeedRecord::root(1).stream(),
        )
        .unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let b = GroupBasis::Polynomial {
            center: 0.0,
            scale: 1.0,
            degree: 3,
        };
        let m = basis_matrix(&[0.0, 1.0], &b);
        assert!(matches!(
            sample_basis(
                &[0.0, 0.0],
                &m,
                &[1.0; 4],
                &mut SeedRecord::root(1).stream()
            ),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 4
            })
        ));
    }

    #[test]
    fn intercept_only_is_constant_shift_with_variance_v() {
        let b = GroupBasis::Polynomial {
            center: 0.0,
            scale: 1.0,
            degree: 1,
        };
        let pts = [0.0, 1.5, -2.0];
        let m = basis_matrix(&pts, &b);
        let root = SeedRecord::root(21);
        let n = 40_000;
        let mut shifts = Vec::with_capacity(n);
        for j in 0..n {
            let out =
                sample_basis(&[0.0; 3], &m, &[0.7], &mut root.child(j as u64).stream()).unwrap();
            assert!((out[0] - out[1]).abs() < 1e-15 && (out[1] - out[2]).abs() < 1e-15);
            shifts.push(out[0]);
        }
        let mean = shifts.iter().sum::<f64>() / n as f64;
        let var = shifts.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of a variance estimate is about v sqrt(2/n)
        assert!(
            (var - 0.7).abs() < 4.0 * 0.7 * (2.0 / n as f64).sqrt(),
            "{var}"
        );
    }

    #[test]
    fn replay_is_identical() {
        let b = GroupBasis::Fourier {
            offset: 0.0,
            periods: vec![1.0, 2.0, 3.0],
        };
        let m = basis_matrix(&[0.1, 0.2], &b);
        let a = sample_basis(&[0.0; 2], &m, &[1.0; 4], &mut SeedRecord::root(4).stream()).unwrap();
        let c = sample_basis(&[0.0; 2], &m, &[1.0; 4], &mut SeedRecord::root(4).stream()).unwrap();
        assert_eq!(a, c);
    }

    fn basis_strategy() -> impl Strategy<Value = GroupBasis> {
        prop_oneof![
            (-2.0..2.0f64, 0.5..3.0f64, 1usize..6).prop_map(|(center, scale, degree)| {
                GroupBasis::Polynomial {
                    center,
                    scale,
                    degree,
                }
            }),
            (-2.0..2.0f64, prop::collection::vec(0.2..5.0f64, 1..5))
                .prop_map(|(offset, periods)| GroupBasis::Fourier { offset, periods }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn deviation_lies_in_column_span(
            basis in basis_strategy(),
            pts in prop::collection::vec(-3.0..3.0f64, 12..30),
            seed in any::<u64>(),
        ) {
            let m = basis_matrix(&pts, &basis);
            let vars = vec![0.8; m.ncols()];
            let mean: Vec<f64> = pts.iter().map(|s| s.sin()).collect();
            let out = sample_basis(&mean, &m, &vars, &mut SeedRecord::root(seed).stream()).unwrap();
            let dev = DVector::from_iterator(pts.len(), out.iter().zip(&mean).map(|(a, b)| a - b));
            // least-squares projection onto span(M) via SVD
            let svd = m.entries().clone().svd(true, true);
            let coef = svd.solve(&dev, 1e-12).unwrap();
            let resid = &dev - m.entries() * coef;
            prop_assert!(resid.norm() < 1e-10 * (1.0 + dev.norm()), "residual {}", resid.norm());
        }
    }
}
