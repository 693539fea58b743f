//! Experiment configuration: a diff-friendly JSON schema with printable
//! defaults, validation, and translation into an ensemble training plan.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Timestamp, DEFAULT_MAX_GAP_HOURS};
use crate::ensemble::{
    EnsembleError, EnsemblePlan, DEFAULT_K_FOLDS, DEFAULT_SELECTION_ITERATIONS,
    DEFAULT_VALIDATION_FRACTION,
};
use crate::sublearners::SublearnerKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown sublearner kind `{0}` (expected gbdt_a, gbdt_b, or mlp)")]
    UnknownSublearner(String),
    #[error("seeds must be nonempty and distinct")]
    BadSeeds,
    #[error("{0}")]
    BadField(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_k_folds() -> usize {
    DEFAULT_K_FOLDS
}

fn default_selection_iterations() -> u32 {
    DEFAULT_SELECTION_ITERATIONS
}

fn default_validation_fraction() -> f64 {
    DEFAULT_VALIDATION_FRACTION
}

fn default_max_gap_hours() -> u32 {
    DEFAULT_MAX_GAP_HOURS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Stacking and selection knobs shared by every hour ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_selection_iterations")]
    pub selection_iterations: u32,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            k_folds: default_k_folds(),
            selection_iterations: default_selection_iterations(),
            validation_fraction: default_validation_fraction(),
        }
    }
}

/// One experiment: which grid file to model, where to cut train from test,
/// which seeds to average, and any hyperparameter overrides.
///
/// Unknown keys are rejected so typos cannot silently fall back to
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid_id: String,
    pub data_path: PathBuf,
    /// Rows strictly before this UTC instant train; the rest evaluates.
    pub train_test_cutoff: Timestamp,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Hyperparameter overrides per sublearner kind ("gbdt_a", "gbdt_b",
    /// "mlp"), applied to that kind in both stacking stages.
    #[serde(default)]
    pub sublearners: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    /// Longest interior gap (hours) interpolated at load time.
    #[serde(default = "default_max_gap_hours")]
    pub max_gap_hours: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn kind_from_name(name: &str) -> Result<SublearnerKind, ConfigError> {
    [
        SublearnerKind::GbdtA,
        SublearnerKind::GbdtB,
        SublearnerKind::Mlp,
    ]
    .into_iter()
    .find(|k| k.name() == name)
    .ok_or_else(|| ConfigError::UnknownSublearner(name.to_string()))
}

impl ExperimentConfig {
    /// A fully populated configuration with every default written out;
    /// also the `print-config` payload.
    pub fn example() -> Self {
        ExperimentConfig {
            grid_id: "demo".to_string(),
            data_path: PathBuf::from("data/demo.csv"),
            train_test_cutoff: "2021-07-01T00:00:00Z".parse().expect("valid timestamp"),
            seeds: default_seeds(),
            sublearners: BTreeMap::new(),
            ensemble: EnsembleSettings::default(),
            max_gap_hours: default_max_gap_hours(),
            output_dir: default_output_dir(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid_id.is_empty() {
            return Err(ConfigError::BadField("grid_id must not be empty".into()));
        }
        if self.data_path.as_os_str().is_empty() {
            return Err(ConfigError::BadField("data_path must not be empty".into()));
        }
        if self.seeds.is_empty()
            || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len()
        {
            return Err(ConfigError::BadSeeds);
        }
        for kind in self.sublearners.keys() {
            kind_from_name(kind)?;
        }
        self.ensemble_plan()?;
        Ok(())
    }

    /// Expands the standard pool with this config's ensemble settings and
    /// per-kind hyperparameter overrides.
    pub fn ensemble_plan(&self) -> Result<EnsemblePlan, ConfigError> {
        let mut plan = EnsemblePlan::standard();
        plan.k_folds = self.ensemble.k_folds;
        plan.selection_iterations = self.ensemble.selection_iterations;
        plan.validation_fraction = self.ensemble.validation_fraction;
        for (kind_name, overrides) in &self.sublearners {
            let kind = kind_from_name(kind_name)?;
            for spec in plan
                .base_specs
                .iter_mut()
                .chain(plan.stack_specs.iter_mut())
                .filter(|spec| spec.kind == kind)
            {
                spec.hyperparameters
                    .extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_json_string(&self) -> Result<String, ConfigError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates configuration JSON (the entry point for
    /// untrusted config files).
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_json_string()?).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_is_valid_and_round_trips() {
        let config = ExperimentConfig::example();
        config.validate().unwrap();
        let json = config.to_json_string().unwrap();
        let back = ExperimentConfig::from_json_str(&json).unwrap();
        assert_eq!(config, back);
        assert_eq!(json, back.to_json_string().unwrap());
    }

    #[test]
    fn missing_optional_fields_take_defaults() {
        let json = r#"{
            "grid_id": "CISO",
            "data_path": "CISO.csv",
            "train_test_cutoff": "2021-07-01T00:00:00Z"
        }"#;
        let config = ExperimentConfig::from_json_str(json).unwrap();
        assert_eq!(config.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(config.ensemble.k_folds, 5);
        assert_eq!(config.ensemble.selection_iterations, 50);
        assert_eq!(config.ensemble.validation_fraction, 0.1);
        assert_eq!(config.max_gap_hours, 6);
        assert_eq!(config.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{
            "grid_id": "CISO",
            "data_path": "CISO.csv",
            "train_test_cutoff": "2021-07-01T00:00:00Z",
            "seedz": [1]
        }"#;
        assert!(matches!(
            ExperimentConfig::from_json_str(json),
            Err(ConfigError::Json(_))
        ));
    }

    #[test]
    fn bad_seed_lists_are_rejected() {
        let mut config = ExperimentConfig::example();
        config.seeds = vec![];
        assert!(matches!(config.validate(), Err(ConfigError::BadSeeds)));
        config.seeds = vec![1, 2, 1];
        assert!(matches!(config.validate(), Err(ConfigError::BadSeeds)));
    }

    #[test]
    fn unknown_sublearner_kind_is_rejected() {
        let mut config = ExperimentConfig::example();
        config
            .sublearners
            .insert("xgboost".to_string(), BTreeMap::new());
        assert!(matches!(
            config.validate(),
            Err(ConfigError::UnknownSublearner(k)) if k == "xgboost"
        ));
    }

    #[test]
    fn overrides_reach_both_stages_of_the_plan() {
        let mut config = ExperimentConfig::example();
        let mut overrides = BTreeMap::new();
        overrides.insert("rounds".to_string(), 42.0);
        config.sublearners.insert("gbdt_a".to_string(), overrides);
        config.ensemble.k_folds = 3;
        let plan = config.ensemble_plan().unwrap();
        assert_eq!(plan.k_folds, 3);
        for spec in plan.base_specs.iter().chain(&plan.stack_specs) {
            if spec.kind == SublearnerKind::GbdtA {
                assert_eq!(spec.hyperparameters["rounds"], 42.0);
            } else {
                assert!(spec.hyperparameters.is_empty());
            }
        }
    }

    #[test]
    fn bad_ensemble_settings_fail_validation() {
        let mut config = ExperimentConfig::example();
        config.ensemble.validation_fraction = 0.9;
        assert!(config.validate().is_err());
    }
}
