//! Perturbation classes: families of candidate conditional-mean functions
//! centred on the Study A fits.
//!
//! A [`PerturbationClass`] is data independent. Resolving it against the
//! Study A surrogates fixes the per-arm anchors (polynomial centre and scale,
//! Fourier offset and periods) and yields a [`ResolvedClass`].

mod basis;
mod gp;
mod moments;

pub use basis::{basis_matrix, sample_basis, BasisKind, BasisMatrix, GroupBasis};
pub use gp::{rbf_matrix, sample_gp, GpFactor};
pub use moments::{closed_form_moments, group_mean_variance, ClosedFormMoments};

use serde::{Deserialize, Serialize};

use crate::data::{mean, min_max, sample_sd, Arm};
use crate::error::{Error, Result};

/// Squared-exponential covariance `variance * exp(-(s - s')^2 / (2 length_scale^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub variance: f64,
    pub length_scale: f64,
}

impl RbfKernel {
    pub fn new(variance: f64, length_scale: f64) -> Result<Self> {
        let k = RbfKernel {
            variance,
            length_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GP variance must be non-negative, got {}",
                self.variance
            )));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "GP length scale must be positive, got {}",
                self.length_scale
            )));
        }
        Ok(())
    }

    pub fn cov(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.variance * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpClass {
    pub control: RbfKernel,
    pub treated: RbfKernel,
}

impl GpClass {
    /// Shared amplitude and length scale for both arms.
    pub fn shared(variance: f64, length_scale: f64) -> Result<Self> {
        let k = RbfKernel::new(variance, length_scale)?;
        Ok(GpClass {
            control: k,
            treated: k,
        })
    }

    pub fn per_group(control: RbfKernel, treated: RbfKernel) -> Result<Self> {
        control.validate()?;
        treated.validate()?;
        Ok(GpClass { control, treated })
    }
}

/// Centre and scale used to standardize `s` before taking powers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialAnchor {
    pub center: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialClass {
    /// Diagonal of the coefficient covariance; its length is the basis size d.
    pub variances: Vec<f64>,
    /// Per-arm anchors; defaults to the Study A sample mean and sd.
    pub anchors: Option<[PolynomialAnchor; 2]>,
}

/// How a range fraction `f` turns into the constant `B` in `sin((s - c) / B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodConvention {
    /// `B = 2 pi / (f r)`.
    #[default]
    Angular,
    /// `B = f r / (2 pi)`, so the s-period of each term is `f r`.
    Period,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodSpec {
    /// Constants derived from fractions of the Study A surrogate range.
    RangeFractions {
        fractions: Vec<f64>,
        convention: PeriodConvention,
    },
    /// The same explicit constants for both arms.
    Explicit(Vec<f64>),
}

impl PeriodSpec {
    pub fn default_fractions() -> Vec<f64> {
        vec![0.5, 0.25, 0.1]
    }

    fn len(&self) -> usize {
        match self {
            PeriodSpec::RangeFractions { fractions, .. } => fractions.len(),
            PeriodSpec::Explicit(b) => b.len(),
        }
    }

    fn resolve(&self, range: f64) -> Vec<f64> {
        use std::f64::consts::TAU;
        match self {
            PeriodSpec::RangeFractions {
                fractions,
                convention,
            } => fractions
                .iter()
                .map(|&f| match convention {
                    PeriodConvention::Angular => TAU / (f * range),
                    PeriodConvention::Period => f * range / TAU,
                })
                .collect(),
            PeriodSpec::Explicit(b) => b.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierClass {
    /// Diagonal of the coefficient covariance (intercept first); length d.
    pub variances: Vec<f64>,
    pub periods: PeriodSpec,
    /// Per-arm offsets `c_g`; defaults to the Study A minimum.
    pub offsets: Option<[f64; 2]>,
}

/// The family of candidate conditional means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationClass {
    GaussianProcess(GpClass),
    Polynomial(PolynomialClass),
    Fourier(FourierClass),
}

/// Class family without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFamily {
    GaussianProcess,
    Polynomial,
    Fourier,
}

impl ClassFamily {
    pub fn label(self) -> &'static str {
        match self {
            ClassFamily::GaussianProcess => "GP",
            ClassFamily::Polynomial => "polynomial",
            ClassFamily::Fourier => "Fourier",
        }
    }
}

fn check_variances(variances: &[f64]) -> Result<()> {
    if variances.is_empty() {
        return Err(Error::InvalidParameter(
            "basis size d must be at least 1".into(),
        ));
    }
    if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(
            "coefficient variances must be non-negative and finite".into(),
        ));
    }
    Ok(())
}

impl PerturbationClass {
    pub fn gp(variance: f64, length_scale: f64) -> Result<Self> {
        Ok(PerturbationClass::GaussianProcess(GpClass::shared(
            variance,
            length_scale,
        )?))
    }

    pub fn polynomial(variances: Vec<f64>) -> Result<Self> {
        let class = PerturbationClass::Polynomial(PolynomialClass {
            variances,
            anchors: None,
        });
        class.validate()?;
        Ok(class)
    }

    /// Fourier class with the default range fractions (0.5, 0.25, 0.1) under `convention`.
    pub fn fourier(variances: Vec<f64>, convention: PeriodConvention) -> Result<Self> {
        Self::fourier_with(
            variances,
            PeriodSpec::RangeFractions {
                fractions: PeriodSpec::default_fractions(),
                convention,
            },
        )
    }

    pub fn fourier_with(variances: Vec<f64>, periods: PeriodSpec) -> Result<Self> {
        let class = PerturbationClass::Fourier(FourierClass {
            variances,
            periods,
            offsets: None,
        });
        class.validate()?;
        Ok(class)
    }

    /// The same class with Fourier range fractions read under `convention`;
    /// other classes are returned unchanged.
    pub fn with_period_convention(mut self, convention: PeriodConvention) -> Self {
        if let PerturbationClass::Fourier(FourierClass {
            periods: PeriodSpec::RangeFractions { convention: c, .. },
            ..
        }) = &mut self
        {
            *c = convention;
        }
        self
    }

    pub fn family(&self) -> ClassFamily {
        match self {
            PerturbationClass::GaussianProcess(_) => ClassFamily::GaussianProcess,
            PerturbationClass::Polynomial(_) => ClassFamily::Polynomial,
            PerturbationClass::Fourier(_) => ClassFamily::Fourier,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PerturbationClass::GaussianProcess(gp) => {
                gp.control.validate()?;
                gp.treated.validate()
            }
            PerturbationClass::Polynomial(p) => {
                check_variances(&p.variances)?;
                if let Some(anchors) = &p.anchors {
                    if anchors
                        .iter()
                        .any(|a| !(a.scale > 0.0 && a.scale.is_finite() && a.center.is_finite()))
                    {
                        return Err(Error::InvalidParameter(
                            "polynomial scale must be positive".into(),
                        ));
                    }
                }
                Ok(())
            }
            PerturbationClass::Fourier(f) => {
                check_variances(&f.variances)?;
                if f.periods.len() + 1 != f.variances.len() {
                    return Err(Error::DimensionMismatch {
                        expected: f.variances.len() - 1,
                        found: f.periods.len(),
                    });
                }
                let positive = match &f.periods {
                    PeriodSpec::RangeFractions { fractions, .. } => fractions,
                    PeriodSpec::Explicit(b) => b,
                };
                if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidParameter(
                        "Fourier periods must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// True when every variance parameter is zero, i.e. the class is the
    /// point mass at the Study A fits.
    pub fn is_degenerate(&self) -> bool {
        match self {
            PerturbationClass::GaussianProcess(gp) => {
                gp.control.variance == 0.0 && gp.treated.variance == 0.0
            }
            PerturbationClass::Polynomial(p) => p.variances.iter().all(|v| *v == 0.0),
            PerturbationClass::Fourier(f) => f.variances.iter().all(|v| *v == 0.0),
        }
    }

    /// Fix the per-arm anchors from the Study A surrogates of each arm.
    pub fn resolve(&self, study_a_surrogates: [&[f64]; 2]) -> Result<ResolvedClass> {
        self.validate()?;
        let groups = match self {
            PerturbationClass::GaussianProcess(gp) => [
                GroupPerturbation::Rbf(gp.control),
                GroupPerturbation::Rbf(gp.treated),
            ],
            PerturbationClass::Polynomial(p) => {
                let mut out = Vec::with_capacity(2);
                for arm in Arm::BOTH {
                    let anchor = match &p.anchors {
                        Some(a) => a[arm.index()],
                        None => {
                            let s = study_a_surrogates[arm.index()];
                            let scale = sample_sd(s);
                            if !(scale > 0.0) {
                                return Err(Error::DegenerateSample(
                                    "study A surrogates have zero spread".into(),
                                ));
                            }
                            PolynomialAnchor {
                                center: mean(s),
                                scale,
                            }
                        }
                    };
                    out.push(GroupPerturbation::Basis {
                        basis: GroupBasis::Polynomial {
                            center: anchor.center,
                            scale: anchor.scale,
                            degree: p.variances.len(),
                        },
                        variances: p.variances.clone(),
                    });
                }
                [out.remove(0), out.remove(0)]
            }
            PerturbationClass::Fourier(f) => {
                let mut out = Vec::with_capacity(2);
                for arm in Arm::BOTH {
                    let s = study_a_surrogates[arm.index()];
                    let (lo, hi) = min_max(s);
                    let range = hi - lo;
                    if matches!(f.periods, PeriodSpec::RangeFractions { .. }) && !(range > 0.0) {
                        return Err(Error::DegenerateSample(
                            "study A surrogates have zero range".into(),
                        ));
                    }
                    let offset = match f.offsets {
                        Some(o) => o[arm.index()],
                        None => lo,
                    };
                    out.push(GroupPerturbation::Basis {
                        basis: GroupBasis::Fourier {
                            offset,
                            periods: f.periods.resolve(range),
                        },
                        variances: f.variances.clone(),
                    });
                }
                [out.remove(0), out.remove(0)]
            }
        };
        Ok(ResolvedClass { groups })
    }
}

/// Perturbation law for one arm once anchors are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroupPerturbation {
    Rbf(RbfKernel),
    Basis {
        basis: GroupBasis,
        variances: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedClass {
    groups: [GroupPerturbation; 2],
}

impl ResolvedClass {
    pub fn new(control: GroupPerturbation, treated: GroupPerturbation) -> Self {
        ResolvedClass {
            groups: [control, treated],
        }
    }

    pub fn group(&self, arm: Arm) -> &GroupPerturbation {
        &self.groups[arm.index()]
    }
}
