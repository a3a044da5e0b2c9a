use serde::{Deserialize, Serialize};

use crate::data::{mean, min_max, Arm, StudyAData, StudyBData};

/// Raw per-arm inputs, possibly incomplete, as read from disk.
#[derive(Debug, Clone, Default)]
pub struct PreconditionInput<'a> {
    pub study_a_surrogates: [&'a [f64]; 2],
    pub study_a_outcomes: [Option<&'a [f64]>; 2],
    pub study_b_surrogates: [&'a [f64]; 2],
}

impl<'a> PreconditionInput<'a> {
    pub fn from_studies(study_a: &'a StudyAData, study_b: &'a StudyBData) -> Self {
        PreconditionInput {
            study_a_surrogates: Arm::BOTH.map(|a| study_a.surrogates(a)),
            study_a_outcomes: Arm::BOTH.map(|a| Some(study_a.outcomes(a))),
            study_b_surrogates: Arm::BOTH.map(|a| study_b.surrogates(a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmPresence {
    pub control: bool,
    pub treated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionReport {
    /// Difference in mean Study B surrogate, treated minus control; absent
    /// when a Study B arm is empty.
    pub delta_sb_hat: Option<f64>,
    pub study_a_nonempty: ArmPresence,
    pub study_b_nonempty: ArmPresence,
    /// Per arm, the fraction of Study B surrogates outside the Study A range.
    pub outside_study_a_range: [f64; 2],
    pub warnings: Vec<String>,
}

impl PreconditionReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Report-only checks of the assumptions the resilience measures rest on.
pub fn check_preconditions(input: &PreconditionInput<'_>) -> PreconditionReport {
    let mut warnings = Vec::new();
    let presence = |v: [&[f64]; 2]| ArmPresence {
        control: !v[0].is_empty(),
        treated: !v[1].is_empty(),
    };
    let study_a_nonempty = presence(input.study_a_surrogates);
    let study_b_nonempty = presence(input.study_b_surrogates);

    for arm in Arm::BOTH {
        let g = arm.index();
        if input.study_a_surrogates[g].is_empty() {
            warnings.push(format!("study A {} arm is empty", arm.name()));
        }
        if input.study_b_surrogates[g].is_empty() {
            warnings.push(format!("study B {} arm is empty", arm.name()));
        }
        match input.study_a_outcomes[g] {
            None => warnings.push(format!("study A {} arm has no outcomes", arm.name())),
            Some(y) if y.len() != input.study_a_surrogates[g].len() => warnings.push(format!(
                "study A {} arm has {} outcomes for {} surrogates",
                arm.name(),
                y.len(),
                input.study_a_surrogates[g].len()
            )),
            Some(_) => {}
        }
    }

    let delta_sb_hat = if study_b_nonempty.control && study_b_nonempty.treated {
        Some(mean(input.study_b_surrogates[1]) - mean(input.study_b_surrogates[0]))
    } else {
        None
    };
    if let Some(d) = delta_sb_hat {
        if d <= 0.0 {
            warnings.push(format!(
                "study B treatment effect on the surrogate is not positive (estimate {d})"
            ));
        }
    }

    let mut outside = [0.0; 2];
    for arm in Arm::BOTH {
        let g = arm.index();
        let (a, b) = (input.study_a_surrogates[g], input.study_b_surrogates[g]);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let (lo, hi) = min_max(a);
        let n_out = b.iter().filter(|s| **s < lo || **s > hi).count();
        outside[g] = n_out as f64 / b.len() as f64;
        if n_out > 0 {
            warnings.push(format!(
                "{:.1}% of study B {} surrogates ({n_out} of {}) fall outside the study A range [{lo}, {hi}]; the fitted mean is extrapolated there",
                100.0 * outside[g],
                arm.name(),
                b.len()
            ));
        }
    }

    PreconditionReport {
        delta_sb_hat,
        study_a_nonempty,
        study_b_nonempty,
        outside_study_a_range: outside,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input<'a>(a: [&'a [f64]; 2], b: [&'a [f64]; 2]) -> PreconditionInput<'a> {
        PreconditionInput {
            study_a_surrogates: a,
            study_a_outcomes: [Some(a[0]), Some(a[1])],
            study_b_surrogates: b,
        }
    }

    #[test]
    fn positive_effect_inside_support_is_clean() {
        let a = [0.0, 10.0];
        let r = check_preconditions(&input([&a, &a], [&[4.5, 5.0], &[5.0, 5.5]]));
        assert_eq!(r.delta_sb_hat, Some(0.5));
        assert!(r.is_clean(), "{:?}", r.warnings);
        // means 4.75 and 5.25
        let r = check_preconditions(&input([&a, &a], [&[4.75], &[5.0, 5.5]]));
        assert_eq!(r.delta_sb_hat, Some(0.5));
    }

    #[test]
    fn identical_arms_warn() {
        let a = [0.0, 10.0];
        let r = check_preconditions(&input([&a, &a], [&[3.0, 4.0], &[3.0, 4.0]]));
        assert_eq!(r.delta_sb_hat, Some(0.0));
        assert!(r.warnings.iter().any(|w| w.contains("not positive")));
    }

    #[test]
    fn extrapolation_warns_with_fraction() {
        let a = [0.0, 1.0];
        let r = check_preconditions(&input([&a, &a], [&[0.5, 0.6, 0.7, 1.5], &[0.5, 2.0]]));
        assert_eq!(r.outside_study_a_range, [0.25, 0.5]);
        assert!(r
            .warnings
            .iter()
            .any(|w| w.contains("25.0%") && w.contains("control")));
        assert!(r
            .warnings
            .iter()
            .any(|w| w.contains("50.0%") && w.contains("treated")));
    }

    #[test]
    fn empty_and_missing_are_reported() {
        let a = [0.0, 1.0];
        let inp = PreconditionInput {
            study_a_surrogates: [&a, &a],
            study_a_outcomes: [None, Some(&a)],
            study_b_surrogates: [&[], &[0.5]],
        };
        let r = check_preconditions(&inp);
        assert_eq!(r.delta_sb_hat, None);
        assert!(!r.study_b_nonempty.control);
        assert!(r
            .warnings
            .iter()
            .any(|w| w.contains("study B control arm is empty")));
        assert!(r.warnings.iter().any(|w| w.contains("no outcomes")));
    }
}
