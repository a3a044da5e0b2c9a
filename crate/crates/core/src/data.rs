//! Trial data containers.
//!
//! Study B deliberately has no outcome field: the estimation path can only
//! ever see Study B surrogates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment arm of a two-arm randomized trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treated => "treated",
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8
    }

    pub fn from_label(label: i64) -> Option<Arm> {
        match label {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Surrogate values (and optionally outcomes) for one arm of one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    surrogates: Vec<f64>,
    outcomes: Option<Vec<f64>>,
    arm: Arm,
}

impl GroupSample {
    pub fn new(arm: Arm, surrogates: Vec<f64>, outcomes: Option<Vec<f64>>) -> Result<Self> {
        if surrogates.is_empty() {
            return Err(Error::EmptyGroup("group sample has no surrogates"));
        }
        check_finite(&surrogates, "surrogates")?;
        if let Some(y) = &outcomes {
            if y.len() != surrogates.len() {
                return Err(Error::LengthMismatch {
                    what: "surrogates and outcomes",
                    left: surrogates.len(),
                    right: y.len(),
                });
            }
            check_finite(y, "outcomes")?;
        }
        Ok(GroupSample {
            surrogates,
            outcomes,
            arm,
        })
    }

    pub fn with_outcomes(arm: Arm, surrogates: Vec<f64>, outcomes: Vec<f64>) -> Result<Self> {
        Self::new(arm, surrogates, Some(outcomes))
    }

    pub fn surrogates_only(arm: Arm, surrogates: Vec<f64>) -> Result<Self> {
        Self::new(arm, surrogates, None)
    }

    pub fn surrogates(&self) -> &[f64] {
        &self.surrogates
    }

    pub fn outcomes(&self) -> Option<&[f64]> {
        self.outcomes.as_deref()
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn len(&self) -> usize {
        self.surrogates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surrogates.is_empty()
    }

    /// Resample rows by index, keeping surrogate/outcome pairs together.
    pub fn select(&self, indices: &[usize]) -> GroupSample {
        GroupSample {
            surrogates: indices.iter().map(|&i| self.surrogates[i]).collect(),
            outcomes: self
                .outcomes
                .as_ref()
                .map(|y| indices.iter().map(|&i| y[i]).collect()),
            arm: self.arm,
        }
    }
}

/// Completed study with surrogate and primary outcome in both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyAData {
    arms: [GroupSample; 2],
}

impl StudyAData {
    pub fn new(control: GroupSample, treated: GroupSample) -> Result<Self> {
        for (sample, arm) in [(&control, Arm::Control), (&treated, Arm::Treated)] {
            if sample.outcomes().is_none() {
                return Err(Error::MissingOutcomes);
            }
            if sample.arm() != arm {
                return Err(Error::InvalidParameter(format!(
                    "study A arm {arm:?} was given a sample labelled {:?}",
                    sample.arm()
                )));
            }
        }
        Ok(StudyAData {
            arms: [control, treated],
        })
    }

    pub fn from_vectors(s0: Vec<f64>, y0: Vec<f64>, s1: Vec<f64>, y1: Vec<f64>) -> Result<Self> {
        Self::new(
            GroupSample::with_outcomes(Arm::Control, s0, y0)?,
            GroupSample::with_outcomes(Arm::Treated, s1, y1)?,
        )
    }

    pub fn arm(&self, arm: Arm) -> &GroupSample {
        &self.arms[arm.index()]
    }

    pub fn surrogates(&self, arm: Arm) -> &[f64] {
        self.arms[arm.index()].surrogates()
    }

    pub fn outcomes(&self, arm: Arm) -> &[f64] {
        self.arms[arm.index()]
            .outcomes()
            .expect("study A samples always carry outcomes")
    }
}

/// New study in which only the surrogate was measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyBData {
    surrogates: [Vec<f64>; 2],
}

impl StudyBData {
    pub fn new(control: Vec<f64>, treated: Vec<f64>) -> Result<Self> {
        if control.is_empty() {
            return Err(Error::EmptyGroup("study B control arm"));
        }
        if treated.is_empty() {
            return Err(Error::EmptyGroup("study B treated arm"));
        }
        check_finite(&control, "study B surrogates")?;
        check_finite(&treated, "study B surrogates")?;
        Ok(StudyBData {
            surrogates: [control, treated],
        })
    }

    pub fn surrogates(&self, arm: Arm) -> &[f64] {
        &self.surrogates[arm.index()]
    }

    pub fn len(&self, arm: Arm) -> usize {
        self.surrogates[arm.index()].len()
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the n - 1 denominator.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_sample_rejects_bad_input() {
        assert!(GroupSample::surrogates_only(Arm::Control, vec![]).is_err());
        assert!(matches!(
            GroupSample::with_outcomes(Arm::Control, vec![1.0, 2.0], vec![1.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            GroupSample::surrogates_only(Arm::Control, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            GroupSample::with_outcomes(Arm::Control, vec![1.0], vec![f64::INFINITY]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn study_a_requires_outcomes() {
        let c = GroupSample::surrogates_only(Arm::Control, vec![1.0, 2.0]).unwrap();
        let t = GroupSample::with_outcomes(Arm::Treated, vec![1.0, 2.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(StudyAData::new(c, t), Err(Error::MissingOutcomes));
    }

    #[test]
    fn study_b_rejects_empty_arm() {
        assert!(StudyBData::new(vec![], vec![1.0]).is_err());
        assert!(StudyBData::new(vec![1.0], vec![]).is_err());
        assert!(StudyBData::new(vec![1.0], vec![2.0]).is_ok());
    }

    #[test]
    fn sd_uses_n_minus_one() {
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - 1.2909944487358056).abs() < 1e-15);
    }
}
