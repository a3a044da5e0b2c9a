//! The simulation study: nine data-generating settings, misspecified
//! estimator runs, a brute-force truth oracle and replication summaries.

mod generate;
mod settings;
mod study;

pub use generate::{
    generate_setting, true_p0_oracle, GeneratedData, GenerationOptions, OracleConfig, OracleTruth,
};
pub use settings::{
    all_settings, matched_entries, misspecification_entries, setting, MeanFunction, NormalSpec,
    PublishedReference, SimulationSetting, StudyEntry,
};
pub use study::{
    run_study, ReplicationOutcome, SimulationReport, SimulationRow, StatisticSummary, StudyConfig,
};
