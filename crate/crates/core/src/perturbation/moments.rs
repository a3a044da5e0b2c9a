use serde::{Deserialize, Serialize};

use super::basis::basis_matrix;
use super::{GroupPerturbation, ResolvedClass};
use crate::data::Arm;
use crate::error::{Error, Result};
use crate::normal;

/// Exact normal law of the Study B treatment effect under a class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormMoments {
    pub mu_b: f64,
    pub sigma_b2: f64,
}

impl ClosedFormMoments {
    pub fn sigma_b(&self) -> f64 {
        self.sigma_b2.max(0.0).sqrt()
    }

    /// `P(Delta < 0)`; a point mass gives 1 when `mu_b < 0` and 0 otherwise.
    pub fn p_closed(&self) -> f64 {
        let sd = self.sigma_b();
        if sd == 0.0 {
            return if self.mu_b < 0.0 { 1.0 } else { 0.0 };
        }
        normal::cdf(-self.mu_b / sd)
    }

    pub fn q_closed(&self, alpha: f64) -> f64 {
        let sd = self.sigma_b();
        if sd == 0.0 {
            return self.mu_b;
        }
        self.mu_b + sd * normal::quantile(alpha)
    }
}

/// Variance of `sum_i w_i f(s_i)` when `f` follows the perturbation law `law`.
pub fn group_mean_variance(
    points: &[f64],
    weights: &[f64],
    law: &GroupPerturbation,
) -> Result<f64> {
    if points.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "points and weights",
            left: points.len(),
            right: weights.len(),
        });
    }
    match law {
        GroupPerturbation::Rbf(k) => {
            if k.variance == 0.0 {
                return Ok(0.0);
            }
            let mut total = 0.0;
            for (i, (&si, &wi)) in points.iter().zip(weights).enumerate() {
                if wi == 0.0 {
                    continue;
                }
                // diagonal once, off-diagonal pairs twice
                let mut row = 0.5 * wi * k.variance;
                for (&sj, &wj) in points[i + 1..].iter().zip(&weights[i + 1..]) {
                    row += wj * k.cov(si, sj);
                }
                total += 2.0 * wi * row;
            }
            Ok(total.max(0.0))
        }
        GroupPerturbation::Basis { basis, variances } => {
            let m = basis_matrix(points, basis);
            super::basis::check_dims(&m, variances)?;
            let c = m.weighted_column_sums(weights);
            Ok(c.iter().zip(variances).map(|(c, v)| v * c * c).sum())
        }
    }
}

/// Mean and variance of the Study B effect with equal weights within each arm.
///
/// `fitted[g]` holds the Study A fit evaluated at `points[g]`.
pub fn closed_form_moments(
    fitted: [&[f64]; 2],
    points: [&[f64]; 2],
    class: &ResolvedClass,
) -> Result<ClosedFormMoments> {
    let mut mu_b = 0.0;
    let mut sigma_b2 = 0.0;
    for arm in Arm::BOTH {
        let g = arm.index();
        let n = points[g].len();
        if n == 0 {
            return Err(Error::EmptyGroup(arm.name()));
        }
        if fitted[g].len() != n {
            return Err(Error::LengthMismatch {
                what: "fitted values and points",
                left: fitted[g].len(),
                right: n,
            });
        }
        let sign = if arm == Arm::Treated { 1.0 } else { -1.0 };
        mu_b += sign * fitted[g].iter().sum::<f64>() / n as f64;
        let w = vec![1.0 / n as f64; n];
        sigma_b2 += group_mean_variance(points[g], &w, class.group(arm))?;
    }
    Ok(ClosedFormMoments { mu_b, sigma_b2 })
}
