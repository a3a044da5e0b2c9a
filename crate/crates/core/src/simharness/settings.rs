use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturbation::{PeriodConvention, PerturbationClass};

/// True conditional mean of the outcome given the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeanFunction {
    /// `slope * s + intercept`
    Linear { slope: f64, intercept: f64 },
    /// `(s - center)^2 + offset`
    ShiftedQuadratic { center: f64, offset: f64 },
    /// `intercept + amplitude * (sin s + cos s)`
    Trig { intercept: f64, amplitude: f64 },
}

impl MeanFunction {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            MeanFunction::Linear { slope, intercept } => slope * s + intercept,
            MeanFunction::ShiftedQuadratic { center, offset } => (s - center).powi(2) + offset,
            MeanFunction::Trig {
                intercept,
                amplitude,
            } => intercept + amplitude * (s.sin() + s.cos()),
        }
    }
}

/// `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalSpec {
    pub mean: f64,
    pub variance: f64,
}

const fn n(mean: f64, variance: f64) -> NormalSpec {
    NormalSpec { mean, variance }
}

/// Published truth, mean estimate, ESE and ASE for one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub p_truth: f64,
    pub p_estimate: f64,
    pub p_ese: f64,
    pub p_ase: f64,
    pub q_truth: f64,
    pub q_estimate: f64,
    pub q_ese: f64,
    pub q_ase: f64,
}

#[allow(clippy::too_many_arguments)]
const fn published(
    p_truth: f64,
    p_estimate: f64,
    p_ese: f64,
    p_ase: f64,
    q_truth: f64,
    q_estimate: f64,
    q_ese: f64,
    q_ase: f64,
) -> PublishedReference {
    PublishedReference {
        p_truth,
        p_estimate,
        p_ese,
        p_ase,
        q_truth,
        q_estimate,
        q_ese,
        q_ase,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetting {
    pub id: u8,
    pub description: String,
    /// Surrogate laws, control then treated.
    pub study_a: [NormalSpec; 2],
    pub study_b: [NormalSpec; 2],
    pub means: [MeanFunction; 2],
    /// The class Study B outcomes are generated from; also the matched estimator.
    pub class_truth: PerturbationClass,
    pub noise_variance: [f64; 2],
    pub published: PublishedReference,
}

fn gp(variance: f64, length_scale: f64) -> PerturbationClass {
    PerturbationClass::gp(variance, length_scale).expect("valid constants")
}

fn poly(v: [f64; 4]) -> PerturbationClass {
    PerturbationClass::polynomial(v.to_vec()).expect("valid constants")
}

fn fourier(v: [f64; 4]) -> PerturbationClass {
    PerturbationClass::fourier(v.to_vec(), PeriodConvention::Angular).expect("valid constants")
}

/// One of the nine simulation settings.
pub fn setting(id: u8) -> Result<SimulationSetting> {
    use MeanFunction::*;
    let lin = |slope, intercept| Linear { slope, intercept };
    let quad = ShiftedQuadratic {
        center: 0.5,
        offset: -1.0,
    };
    let trig0 = Trig {
        intercept: 0.2,
        amplitude: 0.4,
    };
    let trig1 = Trig {
        intercept: 0.6,
        amplitude: 0.85,
    };
    let (desc, a, b, means, class, v, refs) = match id {
        1 => (
            "paradox likely, GP",
            [n(3.0, 3.0), n(4.0, 3.0)],
            [n(4.75, 1.0), n(5.25, 1.0)],
            [lin(2.0, -1.0), lin(1.0, 3.0)],
            gp(0.30, 5.0),
            1.0,
            published(0.517, 0.522, 0.093, 0.091, -1.058, -1.017, 0.184, 0.187),
        ),
        2 => (
            "paradox possible, GP",
            [n(3.0, 3.0), n(4.0, 3.0)],
            [n(4.75, 1.0), n(5.25, 1.0)],
            [lin(2.0, -1.25), lin(1.0, 3.0)],
            gp(0.25, 5.0),
            1.0,
            published(0.374, 0.387, 0.096, 0.095, -0.723, -0.682, 0.183, 0.185),
        ),
        3 => (
            "paradox unlikely, GP",
            [n(2.0, 3.0), n(3.0, 3.0)],
            [n(1.75, 1.0), n(2.75, 1.0)],
            [lin(1.5, 1.0), lin(3.0, -2.0)],
            gp(1.0, 1.0),
            3.0,
            published(0.009, 0.008, 0.007, 0.008, 1.197, 1.285, 0.263, 0.272),
        ),
        4 => (
            "paradox likely, polynomial",
            [n(0.9, 1.5), n(2.2, 4.5)],
            [n(-0.7, 1.0), n(-0.2, 2.0)],
            [quad, lin(3.0, 1.0)],
            poly([0.25, 0.25, 0.1, 0.1]),
            1.0,
            published(0.502, 0.496, 0.060, 0.062, -2.911, -2.969, 0.544, 0.509),
        ),
        5 => (
            "paradox possible, polynomial",
            [n(0.9, 1.5), n(2.2, 4.5)],
            [n(-0.5, 1.0), n(0.0, 2.0)],
            [quad, lin(3.0, 1.0)],
            poly([0.25, 0.25, 0.1, 0.1]),
            1.0,
            published(0.312, 0.325, 0.067, 0.067, -1.598, -1.617, 0.486, 0.464),
        ),
        6 => (
            "paradox unlikely, polynomial",
            [n(0.9, 1.5), n(2.2, 4.5)],
            [n(-0.08, 1.0), n(0.45, 2.0)],
            [quad, lin(3.0, 1.0)],
            poly([0.25, 0.25, 0.1, 0.1]),
            1.0,
            published(0.031, 0.033, 0.024, 0.024, 0.918, 0.865, 0.393, 0.391),
        ),
        7 => (
            "paradox likely, Fourier",
            [n(5.0, 1.0), n(6.0, 2.0)],
            [n(4.1, 0.5), n(4.5, 0.5)],
            [trig0, trig1],
            fourier([0.5, 0.5, 0.1, 0.1]),
            0.05,
            published(0.478, 0.465, 0.025, 0.024, -1.950, -1.976, 0.167, 0.133),
        ),
        8 => (
            "paradox possible, Fourier",
            [n(5.0, 1.0), n(6.0, 2.0)],
            [n(4.7, 1.0), n(5.4, 1.0)],
            [trig0, trig1],
            fourier([0.05, 0.05, 0.01, 0.01]),
            0.05,
            published(0.103, 0.104, 0.027, 0.025, -0.008, -0.004, 0.074, 0.068),
        ),
        9 => (
            "paradox unlikely, Fourier",
            [n(5.0, 1.0), n(6.0, 2.0)],
            [n(5.5, 0.5), n(6.5, 0.5)],
            [trig0, trig1],
            fourier([0.05, 0.05, 0.01, 0.01]),
            0.05,
            published(0.014, 0.010, 0.006, 0.005, 0.500, 0.524, 0.068, 0.055),
        ),
        other => {
            return Err(Error::InvalidParameter(format!(
                "simulation settings are numbered 1 to 9, got {other}"
            )))
        }
    };
    Ok(SimulationSetting {
        id,
        description: desc.to_string(),
        study_a: a,
        study_b: b,
        means,
        class_truth: class,
        noise_variance: [v, v],
        published: refs,
    })
}

pub fn all_settings() -> Vec<SimulationSetting> {
    (1..=9).map(|i| setting(i).expect("1..=9 exist")).collect()
}

/// A setting paired with the estimator class used on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEntry {
    pub setting: SimulationSetting,
    pub estimator: PerturbationClass,
    pub misspecified: bool,
    /// Published values for this pairing.
    pub published: PublishedReference,
}

impl StudyEntry {
    pub fn matched(setting: SimulationSetting) -> Self {
        StudyEntry {
            estimator: setting.class_truth.clone(),
            published: setting.published,
            misspecified: false,
            setting,
        }
    }
}

pub fn matched_entries(ids: &[u8]) -> Result<Vec<StudyEntry>> {
    ids.iter()
        .map(|&id| Ok(StudyEntry::matched(setting(id)?)))
        .collect()
}

/// Settings 2, 4 and 9 paired with a deliberately wrong estimator class,
/// with the published reference values for each pairing.
pub fn misspecification_entries() -> Vec<StudyEntry> {
    let entry = |id: u8, estimator: PerturbationClass, published: PublishedReference| StudyEntry {
        setting: setting(id).expect("exists"),
        estimator,
        misspecified: true,
        published,
    };
    vec![
        entry(
            2,
            fourier([0.25, 0.25, 0.1, 0.1]),
            published(0.383, 0.425, 0.068, 0.067, -0.688, -1.154, 0.214, 0.195),
        ),
        entry(
            4,
            gp(0.25, 2.0),
            published(0.540, 0.490, 0.200, 0.178, -3.323, -0.770, 0.359, 0.348),
        ),
        entry(
            9,
            poly([0.05, 0.05, 0.01, 0.01]),
            published(0.014, 0.001, 0.001, 0.002, 0.500, 0.680, 0.053, 0.053),
        ),
    ]
}
