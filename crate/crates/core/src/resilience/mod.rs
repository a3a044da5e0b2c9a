//! Resilience probability, resilience bound and resilience set.

mod estimate;
mod set;

pub use estimate::{
    estimate, AnalysisContext, CurveDraw, Estimate, EstimateConfig, GroupModel, PreparedClass,
    ResilienceReport,
};
pub use set::{
    axis_names, class_at, resilience_set, BoundaryPoint, GridAxis, GridPoint, GridScale, GridSpec,
    ResilienceSet, SetMode,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::PerturbationClass;
use crate::rng::SeedRecord;

/// Plug-in treatment effect: mean of the treated values minus mean of the control values.
pub fn delta_hat(mu1_values: &[f64], mu0_values: &[f64]) -> Result<f64> {
    if mu1_values.is_empty() {
        return Err(Error::EmptyGroup("treated"));
    }
    if mu0_values.is_empty() {
        return Err(Error::EmptyGroup("control"));
    }
    let m1 = mu1_values.iter().sum::<f64>() / mu1_values.len() as f64;
    let m0 = mu0_values.iter().sum::<f64>() / mu0_values.len() as f64;
    Ok(m1 - m0)
}

/// The Monte Carlo draws of the Study B effect under one perturbation class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaDistribution {
    deltas: Vec<f64>,
    class_used: PerturbationClass,
    seed_record: SeedRecord,
}

impl DeltaDistribution {
    pub fn new(
        deltas: Vec<f64>,
        class_used: PerturbationClass,
        seed_record: SeedRecord,
    ) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::InvalidParameter(
                "a delta distribution needs at least one draw".into(),
            ));
        }
        if deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("treatment effect draws"));
        }
        Ok(DeltaDistribution {
            deltas,
            class_used,
            seed_record,
        })
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn class_used(&self) -> &PerturbationClass {
        &self.class_used
    }

    pub fn seed_record(&self) -> &SeedRecord {
        &self.seed_record
    }

    /// Empirical CDF evaluated just below `x`, i.e. the fraction strictly below.
    pub fn ecdf_below(&self, x: f64) -> f64 {
        fraction_below(&self.deltas, x)
    }
}

pub(crate) fn fraction_below(values: &[f64], x: f64) -> f64 {
    values.iter().filter(|d| **d < x).count() as f64 / values.len() as f64
}

/// 1-based rank of the lower alpha-quantile: the smallest k with k / n >= alpha.
pub(crate) fn quantile_rank(n: usize, alpha: f64) -> usize {
    let nf = n as f64;
    let mut k = (alpha * nf).ceil().max(1.0) as usize;
    // alpha * n can land a hair off an integer; settle the rank on the
    // comparison that defines it.
    while k > 1 && (k - 1) as f64 / nf >= alpha {
        k -= 1;
    }
    while k < n && (k as f64) / nf < alpha {
        k += 1;
    }
    k.min(n)
}

pub(crate) fn lower_quantile(values: &[f64], alpha: f64) -> f64 {
    let k = quantile_rank(values.len(), alpha);
    let mut scratch = values.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Fraction of draws with a strictly negative effect.
pub fn resilience_probability(dist: &DeltaDistribution) -> f64 {
    fraction_below(&dist.deltas, 0.0)
}

/// The `ceil(alpha J)`-th smallest draw.
pub fn resilience_bound(dist: &DeltaDistribution, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(lower_quantile(&dist.deltas, alpha))
}
