//! Trainable regression models with a uniform train/predict interface.
//!
//! The pool holds two gradient-boosted-tree variants that differ only in
//! hyperparameters (`gbdt_a`: shallower, faster learning rate, row
//! subsampling; `gbdt_b`: deeper, slower, L2 leaf regularization) and a
//! multilayer perceptron. Diversity across the three is what the stacking
//! and selection layers exploit.
//!
//! Trained models are immutable, cheap to share across threads, and
//! serialize to versioned JSON that round-trips bit-exactly.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMatrix, TargetVector};

pub mod gbdt;
pub mod mlp;

pub use gbdt::GbdtModel;
pub use mlp::{MlpModel, MlpNet};

#[derive(Debug, Error)]
pub enum SublearnerError {
    #[error("need at least {needed} training rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("feature matrix has {rows} rows but target has {targets}")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("hyperparameter `{key}`: {reason}")]
    BadHyperparameter { key: String, reason: String },
    #[error("unknown hyperparameter `{key}` for kind {kind}")]
    UnknownHyperparameter { key: String, kind: String },
    #[error("spec kind {got} not valid here, expected {expected}")]
    WrongKind { expected: &'static str, got: String },
    #[error("prediction input columns do not match the fitted columns: {0}")]
    ColumnMismatch(String),
    #[error("training diverged to a non-finite loss at epoch {epoch}")]
    NonfiniteLoss { epoch: usize },
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model parameters invalid: {0}")]
    InvalidModel(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Which model family a spec trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SublearnerKind {
    GbdtA,
    GbdtB,
    Mlp,
}

impl SublearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            SublearnerKind::GbdtA => "gbdt_a",
            SublearnerKind::GbdtB => "gbdt_b",
            SublearnerKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for SublearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Model kind, hyperparameter overrides, and training seed.
///
/// `hyperparameters` holds only deviations from the per-kind defaults;
/// keys are validated against the kind before training starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublearnerSpec {
    pub kind: SublearnerKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
}

impl SublearnerSpec {
    pub fn new(kind: SublearnerKind, seed: u64) -> Self {
        SublearnerSpec {
            kind,
            hyperparameters: BTreeMap::new(),
            seed,
        }
    }

    pub fn with_hyperparameter(mut self, key: &str, value: f64) -> Self {
        self.hyperparameters.insert(key.to_string(), value);
        self
    }
}

/// Fitted model parameters, by family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParameters {
    Gbdt(GbdtModel),
    Mlp(MlpModel),
}

/// An immutable fitted model bound to the exact column list it was fit on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedSublearner {
    spec: SublearnerSpec,
    feature_columns: Vec<String>,
    parameters: ModelParameters,
}

/// On-disk envelope for a single trained sublearner.
#[derive(Debug, Serialize, Deserialize)]
struct SublearnerFile {
    format_version: u32,
    spec: SublearnerSpec,
    feature_columns: Vec<String>,
    parameters: ModelParameters,
}

/// Anything that maps feature rows to predictions.
pub trait Regressor: Send + Sync {
    /// Predicts one value per row. Rows must already be in the layout the
    /// model was fit on; width mismatches are a caller bug and panic.
    fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64>;

    fn n_features(&self) -> usize;
}

impl TrainedSublearner {
    pub(crate) fn from_parts(
        spec: SublearnerSpec,
        feature_columns: Vec<String>,
        parameters: ModelParameters,
    ) -> Self {
        TrainedSublearner {
            spec,
            feature_columns,
            parameters,
        }
    }

    pub fn spec(&self) -> &SublearnerSpec {
        &self.spec
    }

    pub fn feature_columns(&self) -> &[String] {
        &self.feature_columns
    }

    pub fn parameters(&self) -> &ModelParameters {
        &self.parameters
    }

    /// Predicts for a named-column matrix; the column list must equal the
    /// fitted list exactly, order included.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, SublearnerError> {
        if x.column_names() != self.feature_columns.as_slice() {
            return Err(SublearnerError::ColumnMismatch(format!(
                "fitted on {} columns starting [{}], given {} starting [{}]",
                self.feature_columns.len(),
                self.feature_columns.first().map(String::as_str).unwrap_or(""),
                x.n_cols(),
                x.column_names().first().map(String::as_str).unwrap_or(""),
            )));
        }
        Ok(self.predict_rows(x.rows()))
    }

    pub fn to_json_string(&self) -> Result<String, SublearnerError> {
        let file = SublearnerFile {
            format_version: crate::FORMAT_VERSION,
            spec: self.spec.clone(),
            feature_columns: self.feature_columns.clone(),
            parameters: self.parameters.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Structural validity: parameter shapes must agree with the fitted
    /// column list and every parameter must be finite, so a hostile model
    /// file cannot panic prediction. Run after any deserialization path
    /// that bypasses [`TrainedSublearner::from_json_str`].
    pub fn validate(&self) -> Result<(), SublearnerError> {
        let d = self.feature_columns.len();
        match &self.parameters {
            ModelParameters::Gbdt(m) => m.validate(d),
            ModelParameters::Mlp(m) => m.validate(d),
        }
        .map_err(SublearnerError::InvalidModel)
    }

    /// Parses and validates model JSON. Structural problems (bad child
    /// indices, shape mismatches, non-finite parameters) are rejected so a
    /// hostile file cannot panic prediction.
    pub fn from_json_str(s: &str) -> Result<Self, SublearnerError> {
        let file: SublearnerFile = serde_json::from_str(s)?;
        if file.format_version != crate::FORMAT_VERSION {
            return Err(SublearnerError::VersionMismatch {
                found: file.format_version,
                expected: crate::FORMAT_VERSION,
            });
        }
        let model = TrainedSublearner {
            spec: file.spec,
            feature_columns: file.feature_columns,
            parameters: file.parameters,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<(), SublearnerError> {
        let json = self.to_json_string()?;
        std::fs::write(path, json).map_err(|source| SublearnerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self, SublearnerError> {
        let text = std::fs::read_to_string(path).map_err(|source| SublearnerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

impl Regressor for TrainedSublearner {
    fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        assert_eq!(
            rows.ncols(),
            self.feature_columns.len(),
            "row width does not match fitted columns"
        );
        match &self.parameters {
            ModelParameters::Gbdt(m) => m.predict_rows(rows),
            ModelParameters::Mlp(m) => m.predict_rows(rows),
        }
    }

    fn n_features(&self) -> usize {
        self.feature_columns.len()
    }
}

/// Trains whichever family the spec names.
pub fn train_sublearner(
    x: &FeatureMatrix,
    y: &TargetVector,
    spec: &SublearnerSpec,
) -> Result<TrainedSublearner, SublearnerError> {
    if x.n_rows() != y.values.len() {
        return Err(SublearnerError::LengthMismatch {
            rows: x.n_rows(),
            targets: y.values.len(),
        });
    }
    let parameters = match spec.kind {
        SublearnerKind::GbdtA | SublearnerKind::GbdtB => {
            ModelParameters::Gbdt(gbdt::train(x, y, spec)?)
        }
        SublearnerKind::Mlp => ModelParameters::Mlp(mlp::train(x, y, spec)?),
    };
    Ok(TrainedSublearner::from_parts(
        spec.clone(),
        x.column_names().to_vec(),
        parameters,
    ))
}

/// Reads a required hyperparameter as a nonnegative integer.
pub(crate) fn int_param(
    overrides: &BTreeMap<String, f64>,
    key: &str,
    default: usize,
    min: usize,
    max: usize,
) -> Result<usize, SublearnerError> {
    let raw = overrides.get(key).copied().unwrap_or(default as f64);
    if !raw.is_finite() || raw.fract() != 0.0 || raw < 0.0 {
        return Err(SublearnerError::BadHyperparameter {
            key: key.to_string(),
            reason: format!("expected an integer, got {raw}"),
        });
    }
    let v = raw as usize;
    if v < min || v > max {
        return Err(SublearnerError::BadHyperparameter {
            key: key.to_string(),
            reason: format!("{v} outside [{min}, {max}]"),
        });
    }
    Ok(v)
}

/// Reads a required hyperparameter as a real in [min, max].
pub(crate) fn real_param(
    overrides: &BTreeMap<String, f64>,
    key: &str,
    default: f64,
    min: f64,
    max: f64,
) -> Result<f64, SublearnerError> {
    let raw = overrides.get(key).copied().unwrap_or(default);
    if !raw.is_finite() || raw < min || raw > max {
        return Err(SublearnerError::BadHyperparameter {
            key: key.to_string(),
            reason: format!("{raw} outside [{min}, {max}]"),
        });
    }
    Ok(raw)
}

/// Rejects hyperparameter keys the kind does not understand.
pub(crate) fn reject_unknown_keys(
    overrides: &BTreeMap<String, f64>,
    allowed: &[&str],
    kind: SublearnerKind,
) -> Result<(), SublearnerError> {
    for key in overrides.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(SublearnerError::UnknownHyperparameter {
                key: key.clone(),
                kind: kind.name().to_string(),
            });
        }
    }
    Ok(())
}

/// Chronological early-stopping split: the last tenth of the rows become a
/// validation tail when that tail has at least `min_tail` rows and patience
/// is enabled; otherwise everything trains.
pub(crate) fn holdout_split(n: usize, patience: usize, min_tail: usize) -> (usize, usize) {
    let tail = n / 10;
    if patience > 0 && tail >= min_tail {
        (n - tail, tail)
    } else {
        (n, 0)
    }
}
