//! Resilience measures against the surrogate paradox.
//!
//! Given a completed two-arm trial that measured both a surrogate marker and
//! the primary outcome (Study A) and a new trial that measured only the
//! surrogate (Study B), this crate estimates how robust a positive surrogate
//! effect in Study B is to plausible changes in the surrogate/outcome
//! relationship:
//!
//! * [`smoother`] fits the Study A conditional means with a Nadaraya-Watson
//!   estimator.
//! * [`perturbation`] draws candidate conditional-mean functions around those
//!   fits (Gaussian process, polynomial and Fourier classes) and gives the
//!   exact normal law of the implied treatment effect.
//! * [`resilience`] turns the draws into the resilience probability, the
//!   resilience bound and the resilience set.
//! * [`inference`] provides bootstrap standard errors and input checks.
//! * [`simharness`] reproduces the simulation study (nine data-generating
//!   settings plus misspecification runs).

pub mod data;
pub mod error;
pub mod inference;
pub mod normal;
pub mod perturbation;
pub mod resilience;
pub mod rng;
pub mod simharness;
pub mod smoother;

pub use data::{Arm, GroupSample, StudyAData, StudyBData};
pub use error::{Error, Result};
pub use inference::{
    bootstrap, check_preconditions, BootstrapConfig, BootstrapResult, DrawScheme,
    PreconditionReport, ResampleScope,
};
pub use perturbation::{
    basis_matrix, closed_form_moments, sample_basis, sample_gp, BasisMatrix, ClosedFormMoments,
    FourierClass, GpClass, GroupBasis, PeriodConvention, PerturbationClass, PolynomialClass,
    RbfKernel, ResolvedClass,
};
pub use resilience::{
    delta_hat, estimate, resilience_bound, resilience_probability, resilience_set, AnalysisContext,
    DeltaDistribution, Estimate, EstimateConfig, GridAxis, GridScale, GridSpec, ResilienceReport,
    ResilienceSet, SetMode,
};
pub use rng::SeedRecord;
pub use smoother::{BandwidthRule, Kernel, SmoothedMean, SmootherConfig};
