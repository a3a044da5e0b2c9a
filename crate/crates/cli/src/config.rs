//! Flat JSON run configurations.
//!
//! A config file is a single JSON object. Command-line flags override its
//! keys one for one, so `--draws 1000` and `{"draws": 1000}` are the same
//! setting. The master seed has no default.

use std::path::Path;

use resilience_core::simharness::{
    matched_entries, misspecification_entries, GenerationOptions, OracleConfig, StudyConfig,
    StudyEntry,
};
use resilience_core::{
    BootstrapConfig, DrawScheme, EstimateConfig, GridAxis, GridScale, GridSpec, Kernel,
    PeriodConvention, PerturbationClass, ResampleScope, SetMode, SmootherConfig,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Key that marks a run manifest; its `config` member is accepted as a config.
pub const MANIFEST_MARKER: &str = "manifest_version";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassName {
    #[default]
    Gp,
    Polynomial,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetModeName {
    #[default]
    ClosedForm,
    MonteCarlo,
}

fn default_draws() -> usize {
    500
}
fn default_alpha() -> f64 {
    0.1
}
fn default_replicates() -> usize {
    200
}
fn default_steps() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub seed: u64,
    #[serde(default)]
    pub class: ClassName,
    /// GP amplitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// GP length scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Coefficient variances of a basis class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    #[serde(default)]
    pub fourier_convention: PeriodConvention,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Bootstrap replicates; 0 skips the bootstrap.
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    #[serde(default)]
    pub bootstrap_scope: ResampleScope,
    #[serde(default)]
    pub bootstrap_draws: DrawScheme,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_x_max: Option<f64>,
    #[serde(default = "default_steps")]
    pub grid_x_steps: usize,
    #[serde(default)]
    pub grid_x_scale: GridScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_y_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_y_max: Option<f64>,
    #[serde(default = "default_steps")]
    pub grid_y_steps: usize,
    #[serde(default)]
    pub grid_y_scale: GridScale,
    #[serde(default)]
    pub set_mode: SetModeName,
    #[serde(default = "default_draws")]
    pub set_draws: usize,
    /// Rayon worker threads; 0 uses every core. Results do not depend on it,
    /// so it is left out of the manifest.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<String>,
}

impl AnalysisConfig {
    pub fn class(&self) -> Result<PerturbationClass> {
        let class = match self.class {
            ClassName::Gp => {
                if self.variances.is_some() {
                    return Err(CliError::Config(
                        "the gp class takes sigma2 and theta, not variances".into(),
                    ));
                }
                let (Some(sigma2), Some(theta)) = (self.sigma2, self.theta) else {
                    return Err(CliError::Config(
                        "the gp class needs sigma2 and theta".into(),
                    ));
                };
                PerturbationClass::gp(sigma2, theta)
            }
            ClassName::Polynomial | ClassName::Fourier => {
                if self.sigma2.is_some() || self.theta.is_some() {
                    return Err(CliError::Config(
                        "basis classes take variances, not sigma2/theta".into(),
                    ));
                }
                let Some(v) = self.variances.clone() else {
                    return Err(CliError::Config("basis classes need variances".into()));
                };
                if self.class == ClassName::Polynomial {
                    PerturbationClass::polynomial(v)
                } else {
                    PerturbationClass::fourier(v, self.fourier_convention)
                }
            }
        };
        class.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn smoother(&self) -> SmootherConfig {
        SmootherConfig {
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            ..SmootherConfig::default()
        }
    }

    pub fn estimate(&self) -> EstimateConfig {
        EstimateConfig {
            draws: self.draws,
            alpha: self.alpha,
        }
    }

    pub fn bootstrap(&self) -> Option<BootstrapConfig> {
        (self.bootstrap_replicates > 0).then(|| BootstrapConfig {
            replicates: self.bootstrap_replicates,
            scope: self.bootstrap_scope,
            draws: self.bootstrap_draws,
            estimate: self.estimate(),
            smoother: self.smoother(),
        })
    }

    /// Parameter grid; unset bounds default to theta in [0.1, 10] and
    /// sigma2 in [0.01, 10] for the GP, and [0.001, 10] for basis variances.
    pub fn grid(&self) -> GridSpec {
        let (x, y) = match self.class {
            ClassName::Gp => ((0.1, 10.0), (0.01, 10.0)),
            _ => ((0.001, 10.0), (0.001, 10.0)),
        };
        GridSpec {
            x: GridAxis {
                min: self.grid_x_min.unwrap_or(x.0),
                max: self.grid_x_max.unwrap_or(x.1),
                steps: self.grid_x_steps,
                scale: self.grid_x_scale,
            },
            y: GridAxis {
                min: self.grid_y_min.unwrap_or(y.0),
                max: self.grid_y_max.unwrap_or(y.1),
                steps: self.grid_y_steps,
                scale: self.grid_y_scale,
            },
        }
    }

    pub fn set_mode(&self) -> SetMode {
        match self.set_mode {
            SetModeName::ClosedForm => SetMode::ClosedForm,
            SetModeName::MonteCarlo => SetMode::MonteCarlo {
                draws: self.set_draws,
            },
        }
    }

    /// Checks that need no data: the class, J, alpha and the grid.
    pub fn validate(&self) -> Result<()> {
        self.class()?;
        self.estimate()
            .validate()
            .and_then(|_| self.smoother().validate())
            .and_then(|_| self.grid().validate())
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.bootstrap_replicates == 1 {
            return Err(CliError::Config(
                "the bootstrap needs at least 2 replicates".into(),
            ));
        }
        Ok(())
    }
}

fn default_simulation_scope() -> ResampleScope {
    ResampleScope::BothStudies
}

fn default_settings() -> Vec<u8> {
    (1..=9).collect()
}
fn default_replications() -> usize {
    1000
}
fn default_n_a() -> usize {
    400
}
fn default_n_b() -> usize {
    200
}
fn default_generations() -> usize {
    4000
}
fn default_per_generation() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    #[serde(default = "default_settings")]
    pub settings: Vec<u8>,
    /// Also run the three mismatched-class experiments.
    #[serde(default)]
    pub misspecification: bool,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Study A size per arm.
    #[serde(default = "default_n_a")]
    pub n_a: usize,
    /// Study B size per arm.
    #[serde(default = "default_n_b")]
    pub n_b: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
    #[serde(default = "default_simulation_scope")]
    pub bootstrap_scope: ResampleScope,
    #[serde(default)]
    pub bootstrap_draws: DrawScheme,
    /// Data generations behind each oracle truth; 0 skips the oracle.
    #[serde(default = "default_generations")]
    pub oracle_generations: usize,
    #[serde(default = "default_per_generation")]
    pub oracle_draws_per_generation: usize,
    #[serde(default)]
    pub study_a_gp_structure: bool,
    #[serde(default)]
    pub fourier_convention: PeriodConvention,
    #[serde(default, skip_serializing)]
    pub workers: usize,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<String>,
}

impl SimulateConfig {
    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            replications: self.replications,
            generation: GenerationOptions {
                n_a: self.n_a,
                n_b: self.n_b,
                study_a_gp_structure: self.study_a_gp_structure,
                fourier_convention: self.fourier_convention,
                ..GenerationOptions::default()
            },
            estimate: EstimateConfig {
                draws: self.draws,
                alpha: self.alpha,
            },
            bootstrap_replicates: self.bootstrap_replicates,
            bootstrap_scope: self.bootstrap_scope,
            bootstrap_draws: self.bootstrap_draws,
            oracle: (self.oracle_generations > 0).then_some(OracleConfig {
                generations: self.oracle_generations,
                draws_per_generation: self.oracle_draws_per_generation,
            }),
        }
    }

    /// Matched entries for the chosen settings, then the misspecification runs
    /// whose setting was chosen.
    pub fn entries(&self) -> Result<Vec<StudyEntry>> {
        let mut entries =
            matched_entries(&self.settings).map_err(|e| CliError::Config(e.to_string()))?;
        if self.misspecification {
            entries.extend(
                misspecification_entries()
                    .into_iter()
                    .filter(|e| self.settings.contains(&e.setting.id)),
            );
        }
        Ok(entries)
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() {
            return Err(CliError::Config("no settings selected".into()));
        }
        self.entries()?;
        self.study()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Read `path` (if any), apply `overrides` key by key, and deserialize.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: Map<String, Value>) -> Result<T> {
    let mut map = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            match value {
                Value::Object(mut m) if m.contains_key(MANIFEST_MARKER) => match m.remove("config")
                {
                    Some(Value::Object(c)) => c,
                    _ => {
                        return Err(CliError::Config(format!(
                            "{}: manifest has no config object",
                            p.display()
                        )))
                    }
                },
                Value::Object(m) => m,
                _ => {
                    return Err(CliError::Config(format!(
                        "{}: expected a JSON object",
                        p.display()
                    )))
                }
            }
        }
        None => Map::new(),
    };
    map.extend(overrides);
    serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
}
