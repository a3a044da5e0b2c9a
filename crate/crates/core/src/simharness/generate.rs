use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::settings::{NormalSpec, SimulationSetting};
use crate::data::{sample_sd, Arm, StudyAData, StudyBData};
use crate::error::{Error, Result};
use crate::perturbation::{sample_gp, PeriodConvention, PerturbationClass};
use crate::resilience::{
    fraction_below, lower_quantile, AnalysisContext, GroupModel, PreparedClass,
};
use crate::rng::{tag, SeedRecord, Stream};
use crate::smoother::SmootherConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOptions {
    /// Study A sample size per arm.
    pub n_a: usize,
    /// Study B sample size per arm.
    pub n_b: usize,
    /// Smoother used for the Study A fits that centre the Study B outcomes.
    pub smoother: SmootherConfig,
    /// Add a GP deviation to the Study A outcomes in the GP settings.
    pub study_a_gp_structure: bool,
    /// How Fourier range fractions become period constants.
    pub fourier_convention: PeriodConvention,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            n_a: 400,
            n_b: 200,
            smoother: SmootherConfig::gaussian_reference(),
            study_a_gp_structure: false,
            fourier_convention: PeriodConvention::Angular,
        }
    }
}

impl GenerationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_a < 2 || self.n_b < 2 {
            return Err(Error::InvalidParameter(
                "simulated arms need at least two subjects".into(),
            ));
        }
        self.smoother.validate()
    }
}

/// One simulated pair of studies. Study B outcomes sit on a separate
/// channel; the estimators only ever see [`StudyBData`].
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub study_a: StudyAData,
    pub context: AnalysisContext,
    hidden: [Vec<f64>; 2],
}

impl GeneratedData {
    pub fn study_b(&self) -> &StudyBData {
        self.context.study_b()
    }

    pub fn hidden_outcomes(&self, arm: Arm) -> &[f64] {
        &self.hidden[arm.index()]
    }

    /// Realized Study B effect on the primary outcome.
    pub fn hidden_delta(&self) -> f64 {
        crate::resilience::delta_hat(&self.hidden[1], &self.hidden[0]).expect("arms are nonempty")
    }
}

pub(crate) fn sample_surrogates(spec: NormalSpec, n: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    let law = Normal::new(spec.mean, spec.variance.sqrt())
        .map_err(|e| Error::InvalidParameter(format!("surrogate law: {e}")))?;
    Ok((0..n).map(|_| law.sample(rng)).collect())
}

fn add_noise(values: &mut [f64], variance: f64, rng: &mut Stream) {
    let sd = variance.sqrt();
    for v in values {
        let z: f64 = rng.sample(StandardNormal);
        *v += sd * z;
    }
}

/// Study B outcomes: a draw from the true class around the fits plus noise.
fn draw_hidden(
    ctx: &AnalysisContext,
    prepared: &PreparedClass,
    noise_variance: [f64; 2],
    rng: &mut Stream,
) -> [Vec<f64>; 2] {
    Arm::BOTH.map(|arm| {
        let mut y = ctx.fitted(arm).to_vec();
        match prepared.model(arm) {
            GroupModel::Fixed => {}
            GroupModel::Gp(factor) => {
                for (v, d) in y.iter_mut().zip(factor.draw_deviation(rng).iter()) {
                    *v += d;
                }
            }
            GroupModel::Basis { matrix, sd } => {
                let beta = DVector::from_iterator(
                    sd.len(),
                    sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)),
                );
                let dev = matrix.entries() * beta;
                for (v, d) in y.iter_mut().zip(dev.iter()) {
                    *v += d;
                }
            }
        }
        add_noise(&mut y, noise_variance[arm.index()], rng);
        y
    })
}

/// The class outcomes are generated from, under the configured Fourier convention.
pub(crate) fn truth_class(
    setting: &SimulationSetting,
    opts: &GenerationOptions,
) -> PerturbationClass {
    setting
        .class_truth
        .clone()
        .with_period_convention(opts.fourier_convention)
}

/// Draw Study A, fit the means, draw Study B surrogates and the hidden Study B outcomes.
pub fn generate_setting(
    setting: &SimulationSetting,
    opts: &GenerationOptions,
    seed: &SeedRecord,
) -> Result<GeneratedData> {
    opts.validate()?;
    let class = truth_class(setting, opts);
    let mut rng = seed.child(tag::GENERATE).stream();

    let mut arms = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let g = arm.index();
        let s = sample_surrogates(setting.study_a[g], opts.n_a, &mut rng)?;
        let mut y: Vec<f64> = s.iter().map(|&v| setting.means[g].eval(v)).collect();
        if opts.study_a_gp_structure {
            if let PerturbationClass::GaussianProcess(gp) = &class {
                let k = if arm == Arm::Treated {
                    gp.treated
                } else {
                    gp.control
                };
                y = sample_gp(&y, &s, &k, &mut rng)?;
            }
        }
        add_noise(&mut y, setting.noise_variance[g], &mut rng);
        arms.push((s, y));
    }
    let (s1, y1) = arms.pop().expect("two arms");
    let (s0, y0) = arms.pop().expect("two arms");
    let study_a = StudyAData::from_vectors(s0, y0, s1, y1)?;

    let b0 = sample_surrogates(setting.study_b[0], opts.n_b, &mut rng)?;
    let b1 = sample_surrogates(setting.study_b[1], opts.n_b, &mut rng)?;
    let context = AnalysisContext::new(&study_a, StudyBData::new(b0, b1)?, &opts.smoother)?;

    let prepared = context.prepare(&class)?;
    let hidden = draw_hidden(&context, &prepared, setting.noise_variance, &mut rng);
    Ok(GeneratedData {
        study_a,
        context,
        hidden,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Independent generations of both studies.
    pub generations: usize,
    /// Fresh Study B outcome draws per generation.
    pub draws_per_generation: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            generations: 4000,
            draws_per_generation: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    /// Fraction of realized Study B effects below zero.
    pub p0: f64,
    /// Monte Carlo standard error of `p0`, from the spread across generations.
    pub p0_se: f64,
    /// Lower alpha-quantile of the realized effects.
    pub q_alpha: f64,
    pub alpha: f64,
    pub draws: usize,
}

/// Brute-force truth: regenerate both studies many times and look at the
/// realized Study B effect on the hidden outcomes.
pub fn true_p0_oracle(
    setting: &SimulationSetting,
    opts: &GenerationOptions,
    config: &OracleConfig,
    alpha: f64,
    seed: &SeedRecord,
) -> Result<OracleTruth> {
    crate::resilience::check_alpha(alpha)?;
    if config.generations < 2 || config.draws_per_generation == 0 {
        return Err(Error::InvalidParameter(
            "the oracle needs at least two generations and one draw each".into(),
        ));
    }
    let class = truth_class(setting, opts);
    let root = seed.child(tag::ORACLE);
    let per_generation: Vec<Vec<f64>> = (0..config.generations as u64)
        .into_par_iter()
        .map(|g| -> Result<Vec<f64>> {
            let gen_seed = root.child(g);
            let data = generate_setting(setting, opts, &gen_seed)?;
            let prepared = data.context.prepare(&class)?;
            let mut out = Vec::with_capacity(config.draws_per_generation);
            out.push(data.hidden_delta());
            for k in 1..config.draws_per_generation as u64 {
                let mut rng = gen_seed.child(k).stream();
                let y = draw_hidden(&data.context, &prepared, setting.noise_variance, &mut rng);
                out.push(crate::resilience::delta_hat(&y[1], &y[0])?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let fractions: Vec<f64> = per_generation
        .iter()
        .map(|d| fraction_below(d, 0.0))
        .collect();
    let all: Vec<f64> = per_generation.into_iter().flatten().collect();
    Ok(OracleTruth {
        p0: fraction_below(&all, 0.0),
        p0_se: sample_sd(&fractions) / (fractions.len() as f64).sqrt(),
        q_alpha: lower_quantile(&all, alpha),
        alpha,
        draws: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use crate::simharness::settings::setting;

    #[test]
    fn setting_one_study_b_surrogate_means() {
        let s = setting(1).unwrap();
        let mut rng = SeedRecord::root(1).stream();
        for (g, expect) in [(0, 4.75), (1, 5.25)] {
            let v = sample_surrogates(s.study_b[g], 100_000, &mut rng).unwrap();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            // sd of the mean is 1 / sqrt(1e5) ~ 0.003
            assert!((m - expect).abs() < 0.015, "{m}");
        }
    }

    #[test]
    fn noiseless_point_mass_reproduces_the_fits() {
        for id in [1, 4, 7] {
            let mut s = setting(id).unwrap();
            s.noise_variance = [0.0, 0.0];
            s.class_truth = match s.class_truth.family() {
                crate::perturbation::ClassFamily::GaussianProcess => {
                    PerturbationClass::gp(0.0, 1.0).unwrap()
                }
                crate::perturbation::ClassFamily::Polynomial => {
                    PerturbationClass::polynomial(vec![0.0; 4]).unwrap()
                }
                crate::perturbation::ClassFamily::Fourier => {
                    PerturbationClass::fourier(vec![0.0; 4], PeriodConvention::Angular).unwrap()
                }
            };
            let opts = GenerationOptions {
                n_a: 50,
                n_b: 30,
                ..Default::default()
            };
            let d = generate_setting(&s, &opts, &SeedRecord::root(5)).unwrap();
            for arm in Arm::BOTH {
                assert_eq!(d.hidden_outcomes(arm), d.context.fitted(arm));
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let s = setting(2).unwrap();
        let opts = GenerationOptions {
            n_a: 60,
            n_b: 40,
            ..Default::default()
        };
        let a = generate_setting(&s, &opts, &SeedRecord::root(9)).unwrap();
        let b = generate_setting(&s, &opts, &SeedRecord::root(9)).unwrap();
        assert_eq!(a.study_a, b.study_a);
        assert_eq!(a.study_b(), b.study_b());
        assert_eq!(a.hidden, b.hidden);
        assert!(generate_setting(
            &s,
            &GenerationOptions { n_a: 1, ..opts },
            &SeedRecord::root(9)
        )
        .is_err());
    }

    #[test]
    fn study_a_gp_structure_changes_outcomes_only() {
        let s = setting(1).unwrap();
        let plain = GenerationOptions {
            n_a: 60,
            n_b: 40,
            ..Default::default()
        };
        let gp = GenerationOptions {
            study_a_gp_structure: true,
            ..plain.clone()
        };
        let a = generate_setting(&s, &plain, &SeedRecord::root(3)).unwrap();
        let b = generate_setting(&s, &gp, &SeedRecord::root(3)).unwrap();
        assert_eq!(
            a.study_a.surrogates(Arm::Control),
            b.study_a.surrogates(Arm::Control)
        );
        assert_ne!(
            a.study_a.outcomes(Arm::Control),
            b.study_a.outcomes(Arm::Control)
        );
    }

    #[test]
    fn zero_variance_positive_effect_has_zero_truth() {
        let mut s = setting(3).unwrap();
        s.noise_variance = [0.0, 0.0];
        s.class_truth = PerturbationClass::gp(0.0, 1.0).unwrap();
        let opts = GenerationOptions {
            n_a: 100,
            n_b: 50,
            ..Default::default()
        };
        let t = true_p0_oracle(
            &s,
            &opts,
            &OracleConfig {
                generations: 50,
                draws_per_generation: 2,
            },
            0.1,
            &SeedRecord::root(1),
        )
        .unwrap();
        assert_eq!(t.p0, 0.0);
        assert!(t.q_alpha > 0.0);
    }

    #[test]
    fn oracle_agrees_with_averaged_closed_form() {
        let s = setting(1).unwrap();
        let opts = GenerationOptions::default();
        let cfg = OracleConfig {
            generations: 300,
            draws_per_generation: 10,
        };
        let seed = SeedRecord::root(2024);
        let truth = true_p0_oracle(&s, &opts, &cfg, 0.1, &seed).unwrap();
        // the same generations, summarized through the exact normal law of the
        // realized effect (class variance plus outcome noise)
        let root = seed.child(tag::ORACLE);
        let mut avg = 0.0;
        for g in 0..cfg.generations as u64 {
            let d = generate_setting(&s, &opts, &root.child(g)).unwrap();
            let m = d.context.closed_form(&s.class_truth).unwrap();
            let noise =
                s.noise_variance[0] / opts.n_b as f64 + s.noise_variance[1] / opts.n_b as f64;
            avg += normal::cdf(-m.mu_b / (m.sigma_b2 + noise).sqrt());
        }
        avg /= cfg.generations as f64;
        assert!(
            (truth.p0 - avg).abs() <= 3.0 * truth.p0_se,
            "{} vs {avg} (se {})",
            truth.p0,
            truth.p0_se
        );
    }
}
