use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_sd, Arm, StudyAData, StudyBData};
use crate::error::{Error, Result};
use crate::perturbation::PerturbationClass;
use crate::resilience::{fraction_below, lower_quantile, AnalysisContext, EstimateConfig};
use crate::rng::{tag, SeedRecord};
use crate::smoother::SmootherConfig;

/// Which studies are resampled in each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScope {
    /// Study A fits are held fixed.
    #[default]
    StudyBOnly,
    /// Study A is resampled too and the fits are refit per replicate.
    BothStudies,
}

/// Random numbers behind the function draws of each replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawScheme {
    /// Fresh draws per replicate, so the standard error carries the Monte
    /// Carlo noise of a single estimate as well as the sampling noise.
    #[default]
    Independent,
    /// The same draws in every replicate; isolates resampling variability.
    Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub scope: ResampleScope,
    pub draws: DrawScheme,
    pub estimate: EstimateConfig,
    pub smoother: SmootherConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 200,
            scope: ResampleScope::default(),
            draws: DrawScheme::default(),
            estimate: EstimateConfig::default(),
            smoother: SmootherConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReplicate {
    pub p_hat: f64,
    pub q_alpha_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub se_p: f64,
    pub se_q: f64,
    pub replicates: Vec<BootstrapReplicate>,
    pub b: usize,
    pub scope: ResampleScope,
}

const MAX_ATTEMPTS: usize = 10;

/// `n` indices drawn uniformly with replacement.
pub fn resample_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn has_spread(values: &[f64]) -> bool {
    values.iter().any(|v| *v != values[0])
}

/// Nonparametric bootstrap of the resilience probability and bound.
pub fn bootstrap(
    study_a: &StudyAData,
    study_b: &StudyBData,
    class: &PerturbationClass,
    config: &BootstrapConfig,
    seed: &SeedRecord,
) -> Result<BootstrapResult> {
    let ctx = AnalysisContext::new(study_a, study_b.clone(), &config.smoother)?;
    bootstrap_with_context(&ctx, study_a, class, config, seed)
}

/// As [`bootstrap`], reusing fits already computed for `ctx` (which must
/// come from `study_a` under `config.smoother`).
pub fn bootstrap_with_context(
    ctx: &AnalysisContext,
    study_a: &StudyAData,
    class: &PerturbationClass,
    config: &BootstrapConfig,
    seed: &SeedRecord,
) -> Result<BootstrapResult> {
    if config.replicates < 2 {
        return Err(Error::InvalidParameter(
            "the bootstrap needs B >= 2 replicates".into(),
        ));
    }
    config.estimate.validate()?;
    let root = seed.child(tag::BOOTSTRAP);
    // Factor once when the evaluation points never change.
    let fixed = match config.scope {
        ResampleScope::StudyBOnly => Some(ctx.prepare(class)?),
        ResampleScope::BothStudies => None,
    };

    let replicates: Vec<BootstrapReplicate> = (0..config.replicates)
        .into_par_iter()
        .map(|b| -> Result<BootstrapReplicate> {
            let rep = root.child(b as u64);
            let draw_seed = match config.draws {
                DrawScheme::Independent => rep.clone(),
                DrawScheme::Common => root.clone(),
            };
            let resample = rep.child(tag::RESAMPLE);

            let refit;
            let (context, prepared) = match &fixed {
                Some(p) => (ctx, p.clone()),
                None => {
                    refit = refit_study_a(study_a, ctx.study_b(), &config.smoother, &resample, b)?;
                    let p = refit.prepare(class)?;
                    (&refit, p)
                }
            };

            let mut rng = resample.child(tag::DRAWS).stream();
            let idx = Arm::BOTH.map(|arm| resample_indices(context.points(arm).len(), &mut rng));
            let deltas = context.draw_deltas(
                &prepared,
                Some([&idx[0], &idx[1]]),
                config.estimate.draws,
                &draw_seed,
            )?;
            Ok(BootstrapReplicate {
                p_hat: fraction_below(&deltas, 0.0),
                q_alpha_hat: lower_quantile(&deltas, config.estimate.alpha),
            })
        })
        .collect::<Result<_>>()?;

    let ps: Vec<f64> = replicates.iter().map(|r| r.p_hat).collect();
    let qs: Vec<f64> = replicates.iter().map(|r| r.q_alpha_hat).collect();
    Ok(BootstrapResult {
        se_p: sample_sd(&ps),
        se_q: sample_sd(&qs),
        b: replicates.len(),
        replicates,
        scope: config.scope,
    })
}

/// Resample each Study A arm (retrying resamples with a single distinct
/// surrogate) and refit the means.
fn refit_study_a(
    study_a: &StudyAData,
    study_b: &StudyBData,
    smoother: &SmootherConfig,
    resample: &SeedRecord,
    replicate: usize,
) -> Result<AnalysisContext> {
    let mut arms = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let sample = study_a.arm(arm);
        let mut chosen = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = resample
                .child2(tag::RESAMPLE, (arm.index() * MAX_ATTEMPTS + attempt) as u64)
                .stream();
            let idx = resample_indices(sample.len(), &mut rng);
            let drawn = sample.select(&idx);
            if has_spread(drawn.surrogates()) {
                chosen = Some(drawn);
                break;
            }
        }
        match chosen {
            Some(s) => arms.push(s),
            None => {
                return Err(Error::DegenerateResample {
                    replicate,
                    attempts: MAX_ATTEMPTS,
                })
            }
        }
    }
    let treated = arms.pop().expect("two arms");
    let control = arms.pop().expect("two arms");
    let resampled = StudyAData::new(control, treated)?;
    AnalysisContext::new(&resampled, study_b.clone(), smoother)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoother::SmoothedMean;

    fn data() -> (StudyAData, StudyBData) {
        let s0: Vec<f64> = (0..30)
            .map(|i| (i as f64 * 0.37).sin() * 2.0 + 3.0)
            .collect();
        let s1: Vec<f64> = (0..30)
            .map(|i| (i as f64 * 0.53).cos() * 2.0 + 3.5)
            .collect();
        let y0: Vec<f64> = s0.iter().map(|s| 2.0 * s - 1.0).collect();
        let y1: Vec<f64> = s1.iter().map(|s| s + 3.0).collect();
        let a = StudyAData::from_vectors(s0, y0, s1, y1).unwrap();
        let b = StudyBData::new(
            (0..15).map(|i| 3.0 + (i as f64 * 0.7).sin()).collect(),
            (0..12).map(|i| 3.4 + (i as f64 * 0.9).cos()).collect(),
        )
        .unwrap();
        (a, b)
    }

    fn small_config(scope: ResampleScope) -> BootstrapConfig {
        BootstrapConfig {
            replicates: 30,
            scope,
            estimate: EstimateConfig {
                draws: 200,
                alpha: 0.1,
            },
            smoother: SmootherConfig::gaussian_reference(),
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (a, b) = data();
        let class = PerturbationClass::gp(0.5, 2.0).unwrap();
        for scope in [ResampleScope::StudyBOnly, ResampleScope::BothStudies] {
            let cfg = small_config(scope);
            let r1 = bootstrap(&a, &b, &class, &cfg, &SeedRecord::root(4)).unwrap();
            let r2 = bootstrap(&a, &b, &class, &cfg, &SeedRecord::root(4)).unwrap();
            assert_eq!(r1, r2);
            assert!(r1.se_p >= 0.0 && r1.se_p <= 0.5);
            assert!(r1.se_q > 0.0);
        }
    }

    #[test]
    fn constant_study_b_gives_zero_se() {
        let (a, _) = data();
        let b = StudyBData::new(vec![3.0; 10], vec![3.5; 8]).unwrap();
        let class = PerturbationClass::gp(0.0, 1.0).unwrap();
        let r = bootstrap(
            &a,
            &b,
            &class,
            &small_config(ResampleScope::StudyBOnly),
            &SeedRecord::root(1),
        )
        .unwrap();
        assert!(r.se_p.abs() < 1e-12);
        assert!(r.se_q.abs() < 1e-12);
        assert_eq!(r.b, 30);
    }

    #[test]
    fn needs_two_replicates() {
        let (a, b) = data();
        let mut cfg = small_config(ResampleScope::StudyBOnly);
        cfg.replicates = 1;
        assert!(bootstrap(
            &a,
            &b,
            &PerturbationClass::gp(0.0, 1.0).unwrap(),
            &cfg,
            &SeedRecord::root(1)
        )
        .is_err());
    }

    #[test]
    fn zero_variance_reduces_to_classical_bootstrap() {
        let (a, b) = data();
        let cfg = small_config(ResampleScope::StudyBOnly);
        let seed = SeedRecord::root(77);
        let r = bootstrap(
            &a,
            &b,
            &PerturbationClass::polynomial(vec![0.0; 4]).unwrap(),
            &cfg,
            &seed,
        )
        .unwrap();

        // direct classical bootstrap of a difference of means of transformed surrogates
        let f0 = SmoothedMean::fit_with(a.arm(Arm::Control), &cfg.smoother).unwrap();
        let f1 = SmoothedMean::fit_with(a.arm(Arm::Treated), &cfg.smoother).unwrap();
        let m0 = f0.evaluate_many(b.surrogates(Arm::Control));
        let m1 = f1.evaluate_many(b.surrogates(Arm::Treated));
        let mut diffs = Vec::new();
        for rep in 0..cfg.replicates {
            let mut rng = seed
                .child(tag::BOOTSTRAP)
                .child(rep as u64)
                .child(tag::RESAMPLE)
                .child(tag::DRAWS)
                .stream();
            let i0 = resample_indices(m0.len(), &mut rng);
            let i1 = resample_indices(m1.len(), &mut rng);
            let mean0 = i0.iter().map(|&i| m0[i]).sum::<f64>() / m0.len() as f64;
            let mean1 = i1.iter().map(|&i| m1[i]).sum::<f64>() / m1.len() as f64;
            diffs.push(mean1 - mean0);
        }
        let se = sample_sd(&diffs);
        assert!(
            (r.se_q - se).abs() < 1e-12 * se.max(1.0),
            "{} vs {se}",
            r.se_q
        );
        for (rep, d) in r.replicates.iter().zip(&diffs) {
            assert!((rep.q_alpha_hat - d).abs() < 1e-12);
            assert_eq!(rep.p_hat, if *d < 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn study_a_resamples_without_spread_are_retried_then_abort() {
        let b = StudyBData::new(vec![1.5], vec![1.5]).unwrap();
        let cfg = SmootherConfig::gaussian_reference();
        let stuck = StudyAData::from_vectors(
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            refit_study_a(&stuck, &b, &cfg, &SeedRecord::root(1), 4),
            Err(Error::DegenerateResample {
                replicate: 4,
                attempts: 10
            })
        ));
        // two distinct points collapse to one value half the time; retries recover
        let two = StudyAData::from_vectors(
            vec![1.0, 2.0],
            vec![0.0, 1.0],
            vec![1.0, 2.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        for r in 0..20 {
            let ctx = refit_study_a(&two, &b, &cfg, &SeedRecord::root(r), 0).unwrap();
            assert!(ctx
                .fit(Arm::Control)
                .train_s()
                .iter()
                .any(|s| *s != ctx.fit(Arm::Control).train_s()[0]));
        }
    }

    #[test]
    fn independent_draws_add_monte_carlo_noise() {
        let (a, b) = data();
        // strongly correlated draws and small J: Monte Carlo noise dominates
        let class = PerturbationClass::gp(5.0, 20.0).unwrap();
        let mut cfg = small_config(ResampleScope::StudyBOnly);
        cfg.replicates = 100;
        cfg.estimate.draws = 20;
        let ind = bootstrap(&a, &b, &class, &cfg, &SeedRecord::root(9)).unwrap();
        cfg.draws = DrawScheme::Common;
        let com = bootstrap(&a, &b, &class, &cfg, &SeedRecord::root(9)).unwrap();
        assert!(ind.se_q > 2.0 * com.se_q, "{} vs {}", ind.se_q, com.se_q);
    }
}
