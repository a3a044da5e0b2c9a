use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{
    generate_setting, true_p0_oracle, GenerationOptions, OracleConfig, OracleTruth,
};
use super::settings::{PublishedReference, StudyEntry};
use crate::data::{mean, sample_sd};
use crate::error::{Error, Result};
use crate::inference::{bootstrap_with_context, BootstrapConfig, DrawScheme, ResampleScope};
use crate::resilience::{estimate, lower_quantile, EstimateConfig};
use crate::rng::{tag, SeedRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Replications R per entry.
    pub replications: usize,
    pub generation: GenerationOptions,
    pub estimate: EstimateConfig,
    /// Bootstrap size B; zero skips the standard errors.
    pub bootstrap_replicates: usize,
    /// Both studies by default: each replication draws a fresh Study A, so
    /// the empirical SE includes the fit's sampling noise.
    pub bootstrap_scope: ResampleScope,
    pub bootstrap_draws: DrawScheme,
    /// Brute-force truth per setting; `None` skips it.
    pub oracle: Option<OracleConfig>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            replications: 1000,
            generation: GenerationOptions::default(),
            estimate: EstimateConfig::default(),
            bootstrap_replicates: 200,
            bootstrap_scope: ResampleScope::BothStudies,
            bootstrap_draws: DrawScheme::default(),
            oracle: Some(OracleConfig::default()),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidParameter(
                "a study needs R >= 2 replications".into(),
            ));
        }
        if self.bootstrap_replicates == 1 {
            return Err(Error::InvalidParameter(
                "the bootstrap needs B >= 2 replicates".into(),
            ));
        }
        self.generation.validate()?;
        self.estimate.validate()
    }

    fn bootstrap_config(&self) -> Option<BootstrapConfig> {
        (self.bootstrap_replicates > 0).then(|| BootstrapConfig {
            replicates: self.bootstrap_replicates,
            scope: self.bootstrap_scope,
            draws: self.bootstrap_draws,
            estimate: self.estimate,
            smoother: self.generation.smoother,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub p_hat: f64,
    pub q_alpha_hat: f64,
    pub se_p: Option<f64>,
    pub se_q: Option<f64>,
    pub p_closed: f64,
    pub q_closed: f64,
    /// Realized Study B effect on the hidden outcomes.
    pub hidden_delta: f64,
}

/// Summary of one statistic over the replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    pub mean: f64,
    pub ese: f64,
    pub ase: Option<f64>,
    pub lower_2_5: f64,
    pub upper_97_5: f64,
    /// Oracle truth, when computed.
    pub truth: Option<f64>,
    pub truth_minus_estimate: Option<f64>,
    pub published_truth: f64,
    pub published_truth_minus_estimate: f64,
}

impl StatisticSummary {
    fn new(
        values: &[f64],
        ses: Option<Vec<f64>>,
        truth: Option<f64>,
        published_truth: f64,
    ) -> Self {
        let m = mean(values);
        StatisticSummary {
            mean: m,
            ese: sample_sd(values),
            ase: ses.map(|s| mean(&s)),
            lower_2_5: lower_quantile(values, 0.025),
            upper_97_5: lower_quantile(values, 0.975),
            truth,
            truth_minus_estimate: truth.map(|t| t - m),
            published_truth,
            published_truth_minus_estimate: published_truth - m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRow {
    pub setting_id: u8,
    pub description: String,
    /// Family of the estimator class.
    pub estimator: String,
    pub misspecified: bool,
    pub replications: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub oracle: Option<OracleTruth>,
    pub published: PublishedReference,
    pub p: StatisticSummary,
    pub q: StatisticSummary,
    pub outcomes: Vec<ReplicationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub master_seed: u64,
    pub config: StudyConfig,
    pub rows: Vec<SimulationRow>,
}

/// Substream key of an entry: stable under adding or removing other entries.
fn entry_key(entry: &StudyEntry) -> u64 {
    entry.setting.id as u64 * 2 + entry.misspecified as u64
}

fn run_replication(
    entry: &StudyEntry,
    config: &StudyConfig,
    seed: &SeedRecord,
) -> Result<ReplicationOutcome> {
    let estimator = entry
        .estimator
        .clone()
        .with_period_convention(config.generation.fourier_convention);
    let data = generate_setting(&entry.setting, &config.generation, seed)?;
    let est = estimate(
        &data.context,
        &estimator,
        &config.estimate,
        &seed.child(tag::ESTIMATE),
    )?;
    let (se_p, se_q) = match config.bootstrap_config() {
        Some(b) => {
            let r = bootstrap_with_context(&data.context, &data.study_a, &estimator, &b, seed)?;
            (Some(r.se_p), Some(r.se_q))
        }
        None => (None, None),
    };
    Ok(ReplicationOutcome {
        p_hat: est.report.p_hat,
        q_alpha_hat: est.report.q_alpha_hat,
        se_p,
        se_q,
        p_closed: est.report.p_closed,
        q_closed: est.report.q_closed,
        hidden_delta: data.hidden_delta(),
    })
}

/// Run every entry for `config.replications` replications.
///
/// Failed replications are recorded and left out of the summaries; more than
/// 1% failures in any entry aborts the study.
pub fn run_study(
    entries: &[StudyEntry],
    config: &StudyConfig,
    seed: &SeedRecord,
) -> Result<SimulationReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(entries.len());
    for entry in entries {
        let entry_seed = seed.child(entry_key(entry));
        let results: Vec<Result<ReplicationOutcome>> = (0..config.replications as u64)
            .into_par_iter()
            .map(|r| run_replication(entry, config, &entry_seed.child(r)))
            .collect();
        let mut outcomes = Vec::with_capacity(results.len());
        let mut failure_messages = Vec::new();
        for (r, res) in results.into_iter().enumerate() {
            match res {
                Ok(o) => outcomes.push(o),
                Err(e) => failure_messages.push(format!("replication {r}: {e}")),
            }
        }
        let failures = failure_messages.len();
        if failures * 100 > config.replications || outcomes.len() < 2 {
            return Err(Error::TooManyFailures {
                failed: failures,
                total: config.replications,
            });
        }

        let oracle = match &config.oracle {
            Some(oc) => Some(true_p0_oracle(
                &entry.setting,
                &config.generation,
                oc,
                config.estimate.alpha,
                &seed.child2(tag::ORACLE, entry.setting.id as u64),
            )?),
            None => None,
        };

        let ps: Vec<f64> = outcomes.iter().map(|o| o.p_hat).collect();
        let qs: Vec<f64> = outcomes.iter().map(|o| o.q_alpha_hat).collect();
        let se_ps: Option<Vec<f64>> = outcomes.iter().map(|o| o.se_p).collect();
        let se_qs: Option<Vec<f64>> = outcomes.iter().map(|o| o.se_q).collect();
        rows.push(SimulationRow {
            setting_id: entry.setting.id,
            description: entry.setting.description.clone(),
            estimator: entry.estimator.family().label().to_string(),
            misspecified: entry.misspecified,
            replications: config.replications,
            failures,
            failure_messages,
            oracle,
            published: entry.published,
            p: StatisticSummary::new(&ps, se_ps, oracle.map(|o| o.p0), entry.published.p_truth),
            q: StatisticSummary::new(
                &qs,
                se_qs,
                oracle.map(|o| o.q_alpha),
                entry.published.q_truth,
            ),
            outcomes,
        });
    }
    Ok(SimulationReport {
        master_seed: seed.master,
        config: config.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simharness::settings::{matched_entries, misspecification_entries};

    fn smoke_config() -> StudyConfig {
        StudyConfig {
            replications: 2,
            generation: GenerationOptions {
                n_a: 80,
                n_b: 40,
                ..Default::default()
            },
            estimate: EstimateConfig {
                draws: 100,
                alpha: 0.1,
            },
            bootstrap_replicates: 5,
            oracle: Some(OracleConfig {
                generations: 20,
                draws_per_generation: 2,
            }),
            ..Default::default()
        }
    }

    #[test]
    fn smoke_run_is_well_formed() {
        let mut entries = matched_entries(&[1, 4, 7]).unwrap();
        entries.push(misspecification_entries().remove(1));
        let report = run_study(&entries, &smoke_config(), &SeedRecord::root(7)).unwrap();
        assert_eq!(report.rows.len(), 4);
        for row in &report.rows {
            assert_eq!(row.failures, 0);
            assert_eq!(row.outcomes.len(), 2);
            assert!(row.p.ese.is_finite() && row.q.ese.is_finite());
            assert!(row.p.ase.unwrap() >= 0.0);
            assert!(row.p.mean >= 0.0 && row.p.mean <= 1.0);
            assert!(row.p.lower_2_5 <= row.p.upper_97_5);
            let o = row.oracle.unwrap();
            assert_eq!(row.p.truth, Some(o.p0));
        }
        assert!(report.rows[3].misspecified);
        assert_eq!(report.rows[3].estimator, "GP");
    }

    #[test]
    fn entries_are_independent_of_their_neighbours() {
        let cfg = StudyConfig {
            oracle: None,
            bootstrap_replicates: 0,
            ..smoke_config()
        };
        let alone = run_study(&matched_entries(&[5]).unwrap(), &cfg, &SeedRecord::root(3)).unwrap();
        let together = run_study(
            &matched_entries(&[2, 5]).unwrap(),
            &cfg,
            &SeedRecord::root(3),
        )
        .unwrap();
        assert_eq!(alone.rows[0], together.rows[1]);
        assert!(alone.rows[0].p.ase.is_none());
    }

    #[test]
    fn rejects_bad_config() {
        let entries = matched_entries(&[1]).unwrap();
        let cfg = StudyConfig {
            replications: 1,
            ..smoke_config()
        };
        assert!(run_study(&entries, &cfg, &SeedRecord::root(1)).is_err());
    }
}
