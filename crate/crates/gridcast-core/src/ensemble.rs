//! Two-stage stacked ensembles with greedy weighted selection.
//!
//! For one target hour, base sublearners are trained on raw features and
//! their leakage-free out-of-fold predictions are appended to the raw
//! features to train a second stage of stack models. A greedy forward
//! selection loop then weights the stack models by validation MAPE on a
//! chronological holdout tail. The weighted stack is the unit the
//! forecasting pipeline persists and applies, one per (day class, hour).

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{mape, EvaluationError};
use crate::features::{DayClass, FeatureError, FeatureMatrix, TargetVector};
use crate::seeding::derive_seed;
use crate::sublearners::{
    train_sublearner, Regressor, SublearnerError, SublearnerKind, SublearnerSpec,
    TrainedSublearner,
};

pub const DEFAULT_K_FOLDS: usize = 5;
pub const DEFAULT_SELECTION_ITERATIONS: u32 = 50;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.1;

/// Prefix of the appended base-stage prediction columns.
pub const BASE_PRED_PREFIX: &str = "base_pred_";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no candidate models to select from")]
    EmptyCandidates,
    #[error("selection validation set is empty")]
    EmptyValidation,
    #[error("selection iterations must be at least 1")]
    ZeroIterations,
    #[error("candidate {index} has {got} predictions for {expected} validation rows")]
    CandidateLength {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("candidate {index} produced a non-finite prediction")]
    NonFiniteCandidate { index: usize },
    #[error("fold count must be at least 2, got {k}")]
    BadFoldCount { k: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("row/target count mismatch: {rows} vs {targets}")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("stage column sets disagree: {0}")]
    ColumnMismatch(String),
    #[error("invalid ensemble plan: {0}")]
    BadPlan(String),
    #[error("invalid ensemble model: {0}")]
    InvalidModel(String),
    #[error("model format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Sublearner(#[from] SublearnerError),
    #[error(transparent)]
    Metric(#[from] EvaluationError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Chronological fold boundaries: fold f covers rows
/// [f*n/k, (f+1)*n/k), so sizes differ by at most one and earlier folds
/// hold earlier rows.
pub fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|f| (f * n / k, (f + 1) * n / k)).collect()
}

/// Out-of-fold predictions for a set of base learners: entry (r, m) was
/// produced by learner m trained with row r's entire fold held out.
#[derive(Debug, Clone, PartialEq)]
pub struct OofMatrix {
    predictions: Array2<f64>,
    fold_of: Vec<usize>,
    k: usize,
    column_names: Vec<String>,
}

impl OofMatrix {
    pub fn new(
        predictions: Array2<f64>,
        fold_of: Vec<usize>,
        k: usize,
        column_names: Vec<String>,
    ) -> Result<Self, EnsembleError> {
        if fold_of.len() != predictions.nrows() {
            return Err(EnsembleError::LengthMismatch {
                rows: predictions.nrows(),
                targets: fold_of.len(),
            });
        }
        if column_names.len() != predictions.ncols() {
            return Err(EnsembleError::ColumnMismatch(format!(
                "{} prediction columns but {} names",
                predictions.ncols(),
                column_names.len()
            )));
        }
        if fold_of.iter().any(|&f| f >= k) {
            return Err(EnsembleError::InvalidModel(
                "fold index out of range".to_string(),
            ));
        }
        if predictions.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::InvalidModel(
                "non-finite out-of-fold prediction".to_string(),
            ));
        }
        Ok(OofMatrix {
            predictions,
            fold_of,
            k,
            column_names,
        })
    }

    pub fn predictions(&self) -> ArrayView2<'_, f64> {
        self.predictions.view()
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Appended-column names, "base_pred_<kind>" with a numeric suffix for
    /// repeated kinds.
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn n_rows(&self) -> usize {
        self.predictions.nrows()
    }

    pub fn n_models(&self) -> usize {
        self.predictions.ncols()
    }
}

/// Trains one model per fold for out-of-fold prediction. Implementations
/// must be deterministic in (inputs, fold); the fold index is provided so
/// they can derive per-fold seeds.
pub trait FoldLearner: Sync {
    /// Tag used to name this learner's prediction column.
    fn tag(&self) -> String;

    /// Trains on the rows outside the fold being predicted.
    fn train(
        &self,
        x: &FeatureMatrix,
        y: &TargetVector,
        fold: usize,
    ) -> Result<Box<dyn Regressor>, SublearnerError>;
}

/// Production fold learner: a sublearner spec whose per-fold seed derives
/// from (run seed, spec index, fold).
struct SpecFoldLearner<'a> {
    spec: &'a SublearnerSpec,
    index: usize,
    seed: u64,
}

impl FoldLearner for SpecFoldLearner<'_> {
    fn tag(&self) -> String {
        self.spec.kind.name().to_string()
    }

    fn train(
        &self,
        x: &FeatureMatrix,
        y: &TargetVector,
        fold: usize,
    ) -> Result<Box<dyn Regressor>, SublearnerError> {
        let mut spec = self.spec.clone();
        spec.seed = derive_seed(self.seed, &[self.index as u64, fold as u64]);
        Ok(Box::new(train_sublearner(x, y, &spec)?))
    }
}

/// "base_pred_<tag>" names, deduplicated with a running count suffix when
/// the same tag appears more than once.
fn prediction_column_names<I: IntoIterator<Item = String>>(tags: I) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    tags.into_iter()
        .map(|tag| {
            let count = seen.entry(tag.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                format!("{BASE_PRED_PREFIX}{tag}")
            } else {
                format!("{BASE_PRED_PREFIX}{tag}_{count}")
            }
        })
        .collect()
}

/// Out-of-fold prediction matrix over `k` contiguous chronological folds.
///
/// Every row's prediction comes from a model whose training set excluded
/// that row's whole fold, so the matrix can feed stack-model training
/// without target leakage. Fold models train in parallel; results are
/// written back in deterministic order.
pub fn generate_oof_with(
    learners: &[&dyn FoldLearner],
    x: &FeatureMatrix,
    y: &TargetVector,
    k: usize,
) -> Result<OofMatrix, EnsembleError> {
    let n = x.n_rows();
    if y.values.len() != n {
        return Err(EnsembleError::LengthMismatch {
            rows: n,
            targets: y.values.len(),
        });
    }
    if k < 2 {
        return Err(EnsembleError::BadFoldCount { k });
    }
    if n < 2 * k {
        return Err(EnsembleError::TooFewRows {
            needed: 2 * k,
            got: n,
        });
    }
    let bounds = fold_bounds(n, k);
    let mut fold_of = vec![0usize; n];
    for (f, &(start, end)) in bounds.iter().enumerate() {
        for slot in &mut fold_of[start..end] {
            *slot = f;
        }
    }
    let column_names = prediction_column_names(learners.iter().map(|l| l.tag()));

    let tasks: Vec<(usize, usize)> = (0..learners.len())
        .flat_map(|m| (0..k).map(move |f| (m, f)))
        .collect();
    let cells: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(m, f)| {
            let (start, end) = bounds[f];
            let train_idx: Vec<usize> = (0..start).chain(end..n).collect();
            let x_train = x.select_rows(&train_idx);
            let y_train = TargetVector {
                values: train_idx.iter().map(|&i| y.values[i]).collect(),
                target_hour: y.target_hour,
                target_day: y.target_day,
            };
            let model = learners[m].train(&x_train, &y_train, f)?;
            let fold_idx: Vec<usize> = (start..end).collect();
            Ok(model.predict_rows(x.select_rows(&fold_idx).rows()))
        })
        .collect::<Result<_, EnsembleError>>()?;

    let mut predictions = Array2::zeros((n, learners.len()));
    for (&(m, f), preds) in tasks.iter().zip(&cells) {
        let (start, _) = bounds[f];
        for (offset, &v) in preds.iter().enumerate() {
            predictions[(start + offset, m)] = v;
        }
    }
    OofMatrix::new(predictions, fold_of, k, column_names)
}

/// [`generate_oof_with`] over sublearner specs; each (spec, fold) model's
/// seed derives from `seed` and its coordinates, so the result does not
/// depend on scheduling.
pub fn generate_oof(
    specs: &[SublearnerSpec],
    x: &FeatureMatrix,
    y: &TargetVector,
    k: usize,
    seed: u64,
) -> Result<OofMatrix, EnsembleError> {
    let adapters: Vec<SpecFoldLearner> = specs
        .iter()
        .enumerate()
        .map(|(index, spec)| SpecFoldLearner { spec, index, seed })
        .collect();
    let refs: Vec<&dyn FoldLearner> = adapters.iter().map(|a| a as &dyn FoldLearner).collect();
    generate_oof_with(&refs, x, y, k)
}

/// Appends one named prediction column per base model to `x`.
fn augment_with_predictions(
    x: &FeatureMatrix,
    names: &[String],
    preds: &[Vec<f64>],
) -> Result<FeatureMatrix, EnsembleError> {
    let extra: Vec<(String, String, Vec<f64>)> = names
        .iter()
        .zip(preds)
        .map(|(name, p)| (name.clone(), name.clone(), p.clone()))
        .collect();
    Ok(x.append_columns(&extra)?)
}

/// Trains the stack stage: each spec fits the concatenation of the raw
/// features and the out-of-fold base predictions. Returns the models along
/// with the augmented matrix they saw.
pub fn train_stack_layer(
    specs: &[SublearnerSpec],
    x_raw: &FeatureMatrix,
    oof: &OofMatrix,
    y: &TargetVector,
) -> Result<(Vec<TrainedSublearner>, FeatureMatrix), EnsembleError> {
    if oof.n_rows() != x_raw.n_rows() {
        return Err(EnsembleError::LengthMismatch {
            rows: x_raw.n_rows(),
            targets: oof.n_rows(),
        });
    }
    if oof.n_models() == 0 {
        log::warn!("stack layer trained without base predictions (m = 0)");
    }
    let oof_cols: Vec<Vec<f64>> = (0..oof.n_models())
        .map(|m| oof.predictions().column(m).to_vec())
        .collect();
    let augmented = augment_with_predictions(x_raw, oof.column_names(), &oof_cols)?;
    let models = specs
        .iter()
        .map(|spec| train_sublearner(&augmented, y, spec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((models, augmented))
}

/// Index-order weighted sum of candidate prediction vectors; zero-weight
/// candidates are skipped.
pub fn weighted_combination(candidates: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let n = candidates.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (cand, &w) in candidates.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(cand) {
            *o += w * v;
        }
    }
    out
}

/// Greedy forward ensemble selection with replacement.
///
/// Each step adds the candidate minimizing the MAPE of the running average
/// (ties take the lowest index); the returned weights are the selection
/// counts at the best-scoring step, normalized. The seed is accepted for
/// interface stability but unused: the loop is deterministic.
///
/// Guarantee: the weighted combination never scores worse than the best
/// single candidate. Step 1 evaluates every single candidate, and a final
/// re-check falls back to the best single if recombining the counts in
/// index order rounds the score above it.
pub fn ensemble_select(
    candidates: &[Vec<f64>],
    y_val: &[f64],
    iterations: u32,
    _seed: u64,
) -> Result<Vec<f64>, EnsembleError> {
    if candidates.is_empty() {
        return Err(EnsembleError::EmptyCandidates);
    }
    if y_val.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    if iterations == 0 {
        return Err(EnsembleError::ZeroIterations);
    }
    let n = y_val.len();
    for (index, cand) in candidates.iter().enumerate() {
        if cand.len() != n {
            return Err(EnsembleError::CandidateLength {
                index,
                got: cand.len(),
                expected: n,
            });
        }
        if cand.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFiniteCandidate { index });
        }
    }

    let m = candidates.len();
    let mut counts = vec![0u32; m];
    let mut sum = vec![0.0f64; n];
    let mut trial = vec![0.0f64; n];
    let mut best_mape = f64::INFINITY;
    let mut best_counts = counts.clone();
    for step in 1..=iterations {
        let mut step_best: Option<(f64, usize)> = None;
        for (ci, cand) in candidates.iter().enumerate() {
            for i in 0..n {
                trial[i] = (sum[i] + cand[i]) / f64::from(step);
            }
            let score = mape(y_val, &trial)?;
            if step_best.map_or(true, |(best, _)| score < best) {
                step_best = Some((score, ci));
            }
        }
        let (score, pick) = step_best.expect("nonempty candidates");
        counts[pick] += 1;
        for (s, &v) in sum.iter_mut().zip(&candidates[pick]) {
            *s += v;
        }
        if score < best_mape {
            best_mape = score;
            best_counts.copy_from_slice(&counts);
        }
    }

    let total: u32 = best_counts.iter().sum();
    let mut weights: Vec<f64> = best_counts
        .iter()
        .map(|&c| f64::from(c) / f64::from(total))
        .collect();
    let recombined = mape(y_val, &weighted_combination(candidates, &weights))?;
    let mut best_single = (f64::INFINITY, 0usize);
    for (ci, cand) in candidates.iter().enumerate() {
        let score = mape(y_val, cand)?;
        if score < best_single.0 {
            best_single = (score, ci);
        }
    }
    if best_single.0 < recombined {
        weights = vec![0.0; m];
        weights[best_single.1] = 1.0;
    }
    Ok(weights)
}

/// Training recipe for one stacked hour ensemble: the sublearner pool of
/// both stages plus fold/selection/holdout settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePlan {
    pub base_specs: Vec<SublearnerSpec>,
    pub stack_specs: Vec<SublearnerSpec>,
    pub k_folds: usize,
    pub selection_iterations: u32,
    /// Fraction of training rows reserved, from the chronological end, for
    /// ensemble selection. Must lie in (0, 0.5).
    pub validation_fraction: f64,
}

impl EnsemblePlan {
    /// The standard three-member pool (two tree-ensemble variants and one
    /// MLP) in both stages. Seeds in the specs are placeholders; training
    /// derives real seeds from the run seed.
    pub fn standard() -> Self {
        let pool = vec![
            SublearnerSpec::new(SublearnerKind::GbdtA, 0),
            SublearnerSpec::new(SublearnerKind::GbdtB, 0),
            SublearnerSpec::new(SublearnerKind::Mlp, 0),
        ];
        EnsemblePlan {
            base_specs: pool.clone(),
            stack_specs: pool,
            k_folds: DEFAULT_K_FOLDS,
            selection_iterations: DEFAULT_SELECTION_ITERATIONS,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.stack_specs.is_empty() {
            return Err(EnsembleError::EmptyCandidates);
        }
        if self.k_folds < 2 {
            return Err(EnsembleError::BadFoldCount { k: self.k_folds });
        }
        if self.selection_iterations == 0 {
            return Err(EnsembleError::ZeroIterations);
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(EnsembleError::BadPlan(format!(
                "validation_fraction must lie in (0, 0.5), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// One hour's persisted predictor: final base models, stack models trained
/// on raw features plus out-of-fold base predictions, and selection weights
/// over the stack models.
#[derive(Debug, Clone)]
pub struct StackedHourEnsemble {
    base_models: Vec<TrainedSublearner>,
    base_pred_columns: Vec<String>,
    stack_models: Vec<TrainedSublearner>,
    weights: Vec<f64>,
    target_hour: usize,
    day_class: DayClass,
}

/// On-disk envelope for a stacked hour ensemble.
#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format_version: u32,
    target_hour: usize,
    day_class: DayClass,
    weights: Vec<f64>,
    base_pred_columns: Vec<String>,
    base_models: Vec<TrainedSublearner>,
    stack_models: Vec<TrainedSublearner>,
}

#[derive(Serialize)]
struct EnsembleFileRef<'a> {
    format_version: u32,
    target_hour: usize,
    day_class: DayClass,
    weights: &'a [f64],
    base_pred_columns: &'a [String],
    base_models: &'a [TrainedSublearner],
    stack_models: &'a [TrainedSublearner],
}

impl Serialize for StackedHourEnsemble {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EnsembleFileRef {
            format_version: crate::FORMAT_VERSION,
            target_hour: self.target_hour,
            day_class: self.day_class,
            weights: &self.weights,
            base_pred_columns: &self.base_pred_columns,
            base_models: &self.base_models,
            stack_models: &self.stack_models,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StackedHourEnsemble {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let file = EnsembleFile::deserialize(deserializer)?;
        if file.format_version != crate::FORMAT_VERSION {
            return Err(D::Error::custom(format!(
                "ensemble format version {} unsupported (expected {})",
                file.format_version,
                crate::FORMAT_VERSION
            )));
        }
        StackedHourEnsemble::from_parts(
            file.base_models,
            file.base_pred_columns,
            file.stack_models,
            file.weights,
            file.target_hour,
            file.day_class,
        )
        .map_err(D::Error::custom)
    }
}

impl StackedHourEnsemble {
    /// Validating constructor; the only way to build one outside training.
    pub fn from_parts(
        base_models: Vec<TrainedSublearner>,
        base_pred_columns: Vec<String>,
        stack_models: Vec<TrainedSublearner>,
        weights: Vec<f64>,
        target_hour: usize,
        day_class: DayClass,
    ) -> Result<Self, EnsembleError> {
        let ensemble = StackedHourEnsemble {
            base_models,
            base_pred_columns,
            stack_models,
            weights,
            target_hour,
            day_class,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        if self.stack_models.is_empty() {
            return Err(EnsembleError::EmptyCandidates);
        }
        if self.target_hour >= 24 {
            return Err(EnsembleError::InvalidModel(format!(
                "target_hour {} out of range",
                self.target_hour
            )));
        }
        if self.weights.len() != self.stack_models.len() {
            return Err(EnsembleError::InvalidModel(format!(
                "{} weights for {} stack models",
                self.weights.len(),
                self.stack_models.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EnsembleError::InvalidModel(
                "weights must be finite and nonnegative".to_string(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EnsembleError::InvalidModel(format!(
                "weights sum to {total}, not 1"
            )));
        }
        if self.base_pred_columns.len() != self.base_models.len() {
            return Err(EnsembleError::InvalidModel(format!(
                "{} prediction column names for {} base models",
                self.base_pred_columns.len(),
                self.base_models.len()
            )));
        }
        for model in self.base_models.iter().chain(&self.stack_models) {
            model.validate()?;
        }
        let expected_stack: Vec<String> = match self.base_models.first() {
            Some(first) => {
                for b in &self.base_models[1..] {
                    if b.feature_columns() != first.feature_columns() {
                        return Err(EnsembleError::ColumnMismatch(
                            "base models were fit on different column lists".to_string(),
                        ));
                    }
                }
                first
                    .feature_columns()
                    .iter()
                    .cloned()
                    .chain(self.base_pred_columns.iter().cloned())
                    .collect()
            }
            None => self.stack_models[0].feature_columns().to_vec(),
        };
        for s in &self.stack_models {
            if s.feature_columns() != expected_stack.as_slice() {
                return Err(EnsembleError::ColumnMismatch(
                    "stack models must be fit on raw columns plus base prediction columns"
                        .to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn base_models(&self) -> &[TrainedSublearner] {
        &self.base_models
    }

    pub fn stack_models(&self) -> &[TrainedSublearner] {
        &self.stack_models
    }

    pub fn base_pred_columns(&self) -> &[String] {
        &self.base_pred_columns
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn target_hour(&self) -> usize {
        self.target_hour
    }

    pub fn day_class(&self) -> DayClass {
        self.day_class
    }

    /// Raw feature columns the ensemble expects at prediction time.
    pub fn raw_columns(&self) -> &[String] {
        match self.base_models.first() {
            Some(first) => first.feature_columns(),
            None => self.stack_models[0].feature_columns(),
        }
    }

    /// Base predictions are computed on the raw matrix, appended as named
    /// columns, fed to every stack model, and combined by weight.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>, EnsembleError> {
        let base_preds: Vec<Vec<f64>> = self
            .base_models
            .iter()
            .map(|b| b.predict(x))
            .collect::<Result<_, _>>()?;
        let augmented = augment_with_predictions(x, &self.base_pred_columns, &base_preds)?;
        let mut out = vec![0.0; x.n_rows()];
        for (model, &w) in self.stack_models.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let preds = model.predict(&augmented)?;
            for (o, &v) in out.iter_mut().zip(&preds) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    pub fn to_json_string(&self) -> Result<String, EnsembleError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, EnsembleError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<(), EnsembleError> {
        let json = self.to_json_string()?;
        std::fs::write(path, json).map_err(|source| EnsembleError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self, EnsembleError> {
        let text = std::fs::read_to_string(path).map_err(|source| EnsembleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// Free-function form of [`StackedHourEnsemble::predict`].
pub fn ensemble_predict(
    ensemble: &StackedHourEnsemble,
    x_raw: &FeatureMatrix,
) -> Result<Vec<f64>, EnsembleError> {
    ensemble.predict(x_raw)
}

fn day_class_of(target_day: usize) -> DayClass {
    if target_day == 1 {
        DayClass::Day1
    } else {
        DayClass::DayN
    }
}

/// Trains one complete stacked hour ensemble.
///
/// The final `validation_fraction` of rows (chronological tail, at least
/// one row) is excluded from all model training and used only to select
/// weights. On the head: out-of-fold base predictions feed the stack stage,
/// then final base models retrain on the whole head. Validation rows with
/// nonpositive targets cannot score a MAPE and are dropped from selection.
pub fn train_stacked_ensemble(
    plan: &EnsemblePlan,
    x: &FeatureMatrix,
    y: &TargetVector,
    seed: u64,
) -> Result<StackedHourEnsemble, EnsembleError> {
    plan.validate()?;
    let n = x.n_rows();
    if y.values.len() != n {
        return Err(EnsembleError::LengthMismatch {
            rows: n,
            targets: y.values.len(),
        });
    }
    let val_len = (((n as f64) * plan.validation_fraction).floor() as usize).max(1);
    let head_len = n.saturating_sub(val_len);
    let needed = (2 * plan.k_folds).max(10);
    if head_len < needed {
        return Err(EnsembleError::TooFewRows {
            needed: needed + val_len,
            got: n,
        });
    }
    let head_idx: Vec<usize> = (0..head_len).collect();
    let val_idx: Vec<usize> = (head_len..n).collect();
    let x_head = x.select_rows(&head_idx);
    let x_val = x.select_rows(&val_idx);
    let y_head = TargetVector {
        values: y.values[..head_len].to_vec(),
        target_hour: y.target_hour,
        target_day: y.target_day,
    };

    // Base stage: leakage-free OOF predictions on the head.
    let oof = generate_oof(
        &plan.base_specs,
        &x_head,
        &y_head,
        plan.k_folds,
        derive_seed(seed, &[0]),
    )?;

    // Stack stage sees raw head features plus the OOF columns.
    let stack_specs: Vec<SublearnerSpec> = plan
        .stack_specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut spec = spec.clone();
            spec.seed = derive_seed(seed, &[1, i as u64]);
            spec
        })
        .collect();
    let (stack_models, _) = train_stack_layer(&stack_specs, &x_head, &oof, &y_head)?;

    // Final base models retrain on the whole head; the validation tail
    // stays unseen by every trained model.
    let base_models: Vec<TrainedSublearner> = plan
        .base_specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut spec = spec.clone();
            spec.seed = derive_seed(seed, &[2, i as u64]);
            train_sublearner(&x_head, &y_head, &spec)
        })
        .collect::<Result<_, _>>()?;

    // Candidate predictions on the validation tail via the final base stage.
    let base_val_preds: Vec<Vec<f64>> = base_models
        .iter()
        .map(|b| b.predict(&x_val))
        .collect::<Result<_, _>>()?;
    let augmented_val = augment_with_predictions(&x_val, oof.column_names(), &base_val_preds)?;
    let candidates: Vec<Vec<f64>> = stack_models
        .iter()
        .map(|s| s.predict(&augmented_val))
        .collect::<Result<_, _>>()?;

    let y_val = &y.values[head_len..];
    let keep: Vec<usize> = y_val
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite() && **v > 0.0)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(EnsembleError::EmptyValidation);
    }
    let y_keep: Vec<f64> = keep.iter().map(|&i| y_val[i]).collect();
    let cand_keep: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| keep.iter().map(|&i| c[i]).collect())
        .collect();
    let weights = ensemble_select(
        &cand_keep,
        &y_keep,
        plan.selection_iterations,
        derive_seed(seed, &[3]),
    )?;

    StackedHourEnsemble::from_parts(
        base_models,
        oof.column_names().to_vec(),
        stack_models,
        weights,
        y.target_hour,
        day_class_of(y.target_day),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sublearners::tests::day1_examples;
    use crate::sublearners::{GbdtModel, ModelParameters};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// 1-nearest-neighbor lookup table: a deliberate leaker that memorizes
    /// its training targets.
    struct Memorizer;

    struct MemorizedTable {
        rows: Array2<f64>,
        y: Vec<f64>,
    }

    impl Regressor for MemorizedTable {
        fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
            rows.rows()
                .into_iter()
                .map(|r| {
                    let mut best = (f64::INFINITY, 0usize);
                    for (i, t) in self.rows.rows().into_iter().enumerate() {
                        let d: f64 = r
                            .iter()
                            .zip(t.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        if d < best.0 {
                            best = (d, i);
                        }
                    }
                    self.y[best.1]
                })
                .collect()
        }

        fn n_features(&self) -> usize {
            self.rows.ncols()
        }
    }

    impl FoldLearner for Memorizer {
        fn tag(&self) -> String {
            "memorizer".to_string()
        }

        fn train(
            &self,
            x: &FeatureMatrix,
            y: &TargetVector,
            _fold: usize,
        ) -> Result<Box<dyn Regressor>, SublearnerError> {
            Ok(Box::new(MemorizedTable {
                rows: x.rows().to_owned(),
                y: y.values.clone(),
            }))
        }
    }

    /// Single-column matrix whose value is the row index, plus a target.
    fn indexed_matrix(y: Vec<f64>) -> (FeatureMatrix, TargetVector) {
        let n = y.len();
        let mut rows = Array2::zeros((n, 1));
        for i in 0..n {
            rows[(i, 0)] = i as f64;
        }
        let mut groups = BTreeMap::new();
        groups.insert("x".to_string(), "x".to_string());
        let x = FeatureMatrix::new(vec!["x".to_string()], groups, rows).unwrap();
        let y = TargetVector {
            values: y,
            target_hour: 0,
            target_day: 1,
        };
        (x, y)
    }

    fn constant_model(columns: Vec<String>, value: f64) -> TrainedSublearner {
        TrainedSublearner::from_parts(
            SublearnerSpec::new(SublearnerKind::GbdtA, 0),
            columns,
            ModelParameters::Gbdt(GbdtModel {
                base_score: value,
                trees: vec![],
            }),
        )
    }

    #[test]
    fn fold_bounds_partition_evenly() {
        assert_eq!(
            fold_bounds(100, 5),
            vec![(0, 20), (20, 40), (40, 60), (60, 80), (80, 100)]
        );
        let sizes: Vec<usize> = fold_bounds(10, 3).iter().map(|(s, e)| e - s).collect();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(fold_bounds(7, 7), (0..7).map(|i| (i, i + 1)).collect::<Vec<_>>());
    }

    #[test]
    fn oof_rejects_bad_fold_counts() {
        let (x, y) = indexed_matrix((0..9).map(|i| i as f64).collect());
        assert!(matches!(
            generate_oof(&[], &x, &y, 1, 0),
            Err(EnsembleError::BadFoldCount { k: 1 })
        ));
        assert!(matches!(
            generate_oof(&[], &x, &y, 5, 0),
            Err(EnsembleError::TooFewRows { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn oof_folds_are_contiguous_chronological_blocks() {
        let (x, y) = indexed_matrix((0..100).map(|i| 50.0 + i as f64).collect());
        let oof = generate_oof_with(&[&Memorizer], &x, &y, 5).unwrap();
        assert_eq!(oof.k(), 5);
        assert_eq!(oof.n_rows(), 100);
        for f in 0..5 {
            let members: Vec<usize> = (0..100).filter(|&i| oof.fold_of()[i] == f).collect();
            assert_eq!(members.len(), 20);
            assert_eq!(members, (f * 20..(f + 1) * 20).collect::<Vec<_>>());
        }
        assert_eq!(oof.column_names(), ["base_pred_memorizer"]);
    }

    #[test]
    fn memorizer_exposes_leakage_only_in_fold() {
        // Pure-noise target: a memorizing learner looks perfect in-fold but
        // out-of-fold its nearest neighbor carries independent noise, so the
        // OOF squared error sits near 2*var(y).
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let y_vals: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (x, y) = indexed_matrix(y_vals.clone());

        let in_fold_model = Memorizer.train(&x, &y, 0).unwrap();
        let in_fold = in_fold_model.predict_rows(x.rows());
        let in_mse: f64 = in_fold
            .iter()
            .zip(&y_vals)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / 200.0;
        assert_eq!(in_mse, 0.0);

        let oof = generate_oof_with(&[&Memorizer], &x, &y, 5).unwrap();
        let oof_mse: f64 = oof
            .predictions()
            .column(0)
            .iter()
            .zip(&y_vals)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / 200.0;
        let mean = y_vals.iter().sum::<f64>() / 200.0;
        let var = y_vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 200.0;
        let ratio = oof_mse / (2.0 * var);
        assert!(
            (0.65..1.35).contains(&ratio),
            "oof mse {oof_mse} not near 2*var {}",
            2.0 * var
        );
    }

    #[test]
    fn oof_of_constant_target_is_the_constant() {
        let (x, y) = indexed_matrix(vec![7.5; 30]);
        let specs = [SublearnerSpec::new(SublearnerKind::GbdtA, 0)];
        let oof = generate_oof(&specs, &x, &y, 5, 3).unwrap();
        assert!(oof.predictions().column(0).iter().all(|&v| v == 7.5));
    }

    #[test]
    fn oof_rows_reproduce_from_independent_retraining() {
        // The leakage-freedom invariant, bitwise: retraining the same spec
        // on everything outside a row's fold reproduces that row's OOF
        // prediction exactly.
        let (x, y) = day1_examples(24 * 45, 9);
        let spec = SublearnerSpec::new(SublearnerKind::GbdtA, 0)
            .with_hyperparameter("rounds", 12.0)
            .with_hyperparameter("max_depth", 3.0);
        let seed = 99;
        let k = 4;
        let oof = generate_oof(std::slice::from_ref(&spec), &x, &y, k, seed).unwrap();

        let n = x.n_rows();
        let bounds = fold_bounds(n, k);
        for probe in [0usize, n / 2, n - 1] {
            let fold = oof.fold_of()[probe];
            let (start, end) = bounds[fold];
            let train_idx: Vec<usize> = (0..start).chain(end..n).collect();
            let mut refit_spec = spec.clone();
            refit_spec.seed = derive_seed(seed, &[0, fold as u64]);
            let y_train = TargetVector {
                values: train_idx.iter().map(|&i| y.values[i]).collect(),
                target_hour: y.target_hour,
                target_day: y.target_day,
            };
            let model =
                train_sublearner(&x.select_rows(&train_idx), &y_train, &refit_spec).unwrap();
            let pred = model.predict_rows(x.select_rows(&[probe]).rows())[0];
            assert_eq!(pred, oof.predictions()[(probe, 0)]);
        }
    }

    #[test]
    fn stack_layer_appends_named_prediction_columns() {
        let (x, y) = indexed_matrix((0..40).map(|i| 100.0 + i as f64).collect());
        let specs = [
            SublearnerSpec::new(SublearnerKind::GbdtA, 1)
                .with_hyperparameter("rounds", 5.0),
            SublearnerSpec::new(SublearnerKind::GbdtB, 2)
                .with_hyperparameter("rounds", 5.0),
            SublearnerSpec::new(SublearnerKind::Mlp, 3)
                .with_hyperparameter("epochs", 2.0)
                .with_hyperparameter("hidden1", 4.0)
                .with_hyperparameter("hidden2", 3.0),
        ];
        let oof = generate_oof(&specs, &x, &y, 4, 5).unwrap();
        let stack_spec = [SublearnerSpec::new(SublearnerKind::GbdtA, 9)
            .with_hyperparameter("rounds", 3.0)];
        let (models, augmented) = train_stack_layer(&stack_spec, &x, &oof, &y).unwrap();
        assert_eq!(augmented.n_cols(), x.n_cols() + 3);
        assert_eq!(
            &augmented.column_names()[x.n_cols()..],
            ["base_pred_gbdt_a", "base_pred_gbdt_b", "base_pred_mlp"]
        );
        assert_eq!(models.len(), 1);
        assert_eq!(models[0].feature_columns(), augmented.column_names());
    }

    #[test]
    fn duplicate_kinds_get_distinct_prediction_columns() {
        let names = prediction_column_names(
            ["gbdt_a", "gbdt_a", "mlp"].into_iter().map(String::from),
        );
        assert_eq!(
            names,
            ["base_pred_gbdt_a", "base_pred_gbdt_a_2", "base_pred_mlp"]
        );
    }

    #[test]
    fn stack_model_exploits_a_perfect_base_column() {
        // One OOF column equals the target exactly: a depth-1 tree stack
        // learner keyed on it drives training MSE below 1e-6.
        let y_vals: Vec<f64> = (0..16).map(|i| i as f64 + 0.5).collect();
        let (x, y) = indexed_matrix(y_vals.clone());
        let preds = Array2::from_shape_fn((16, 1), |(i, _)| y_vals[i]);
        let fold_of: Vec<usize> = (0..16).map(|i| i / 8).collect();
        let oof = OofMatrix::new(
            preds,
            fold_of,
            2,
            vec!["base_pred_perfect".to_string()],
        )
        .unwrap();
        let spec = [SublearnerSpec::new(SublearnerKind::GbdtA, 0)
            .with_hyperparameter("rounds", 800.0)
            .with_hyperparameter("learning_rate", 1.0)
            .with_hyperparameter("max_depth", 1.0)
            .with_hyperparameter("subsample", 1.0)
            .with_hyperparameter("l2_leaf_reg", 0.0)
            .with_hyperparameter("early_stop_patience", 0.0)];
        let (models, augmented) = train_stack_layer(&spec, &x, &oof, &y).unwrap();
        let fit = models[0].predict(&augmented).unwrap();
        let mse: f64 = fit
            .iter()
            .zip(&y_vals)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / 16.0;
        assert!(mse < 1e-6, "training mse {mse}");
    }

    #[test]
    fn stack_layer_without_base_models_trains_on_raw() {
        let (x, y) = indexed_matrix((0..20).map(|i| i as f64).collect());
        let oof = OofMatrix::new(
            Array2::zeros((20, 0)),
            (0..20).map(|i| i / 10).collect(),
            2,
            vec![],
        )
        .unwrap();
        let spec = [SublearnerSpec::new(SublearnerKind::GbdtA, 0)
            .with_hyperparameter("rounds", 3.0)];
        let (models, augmented) = train_stack_layer(&spec, &x, &oof, &y).unwrap();
        assert_eq!(augmented.n_cols(), x.n_cols());
        assert_eq!(models[0].feature_columns(), x.column_names());
    }

    #[test]
    fn selection_single_candidate_gets_full_weight() {
        let y = vec![100.0, 200.0, 300.0];
        let w = ensemble_select(&[vec![90.0, 210.0, 310.0]], &y, 50, 0).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn selection_prefers_the_exact_candidate() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..60).map(|_| rng.random_range(100.0..500.0)).collect();
        let noisy: Vec<f64> = y.iter().map(|v| v + rng.random_range(-30.0..30.0)).collect();
        let w = ensemble_select(&[y.clone(), noisy], &y, 50, 0).unwrap();
        assert!(w[0] >= 0.9, "exact candidate weight {}", w[0]);
    }

    #[test]
    fn selection_breaks_ties_toward_the_lowest_index() {
        let y = vec![100.0, 200.0];
        let cand = vec![110.0, 190.0];
        let w = ensemble_select(&[cand.clone(), cand], &y, 50, 0).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn selection_rejects_degenerate_inputs() {
        let y = vec![100.0];
        assert!(matches!(
            ensemble_select(&[], &y, 50, 0),
            Err(EnsembleError::EmptyCandidates)
        ));
        assert!(matches!(
            ensemble_select(&[vec![1.0]], &[], 50, 0),
            Err(EnsembleError::EmptyValidation)
        ));
        assert!(matches!(
            ensemble_select(&[vec![1.0]], &y, 0, 0),
            Err(EnsembleError::ZeroIterations)
        ));
        assert!(matches!(
            ensemble_select(&[vec![1.0, 2.0]], &y, 50, 0),
            Err(EnsembleError::CandidateLength {
                index: 0,
                got: 2,
                expected: 1
            })
        ));
        assert!(matches!(
            ensemble_select(&[vec![f64::NAN]], &y, 50, 0),
            Err(EnsembleError::NonFiniteCandidate { index: 0 })
        ));
    }

    #[test]
    fn selection_never_loses_to_any_single_candidate() {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let n = rng.random_range(5..40);
            let m = rng.random_range(1..6);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(50.0..500.0)).collect();
            let candidates: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    y.iter()
                        .map(|v| v * rng.random_range(0.7..1.3) + rng.random_range(-20.0..20.0))
                        .collect()
                })
                .collect();
            let w = ensemble_select(&candidates, &y, 50, 0).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let final_mape = mape(&y, &weighted_combination(&candidates, &w)).unwrap();
            for cand in &candidates {
                assert!(final_mape <= mape(&y, cand).unwrap());
            }
        }
    }

    fn two_constant_ensemble(weights: Vec<f64>) -> (StackedHourEnsemble, FeatureMatrix) {
        let (x, _) = indexed_matrix(vec![0.0; 4]);
        let columns = x.column_names().to_vec();
        let stack_models = vec![
            constant_model(columns.clone(), 10.0),
            constant_model(columns, 20.0),
        ];
        let e = StackedHourEnsemble::from_parts(
            vec![],
            vec![],
            stack_models,
            weights,
            3,
            DayClass::Day1,
        )
        .unwrap();
        (e, x)
    }

    #[test]
    fn predict_weights_stack_outputs() {
        let (e, x) = two_constant_ensemble(vec![0.25, 0.75]);
        assert_eq!(e.predict(&x).unwrap(), vec![17.5; 4]);
        assert_eq!(ensemble_predict(&e, &x).unwrap(), vec![17.5; 4]);
    }

    #[test]
    fn predict_with_unit_weight_matches_that_stack_model_exactly() {
        let (e, x) = two_constant_ensemble(vec![1.0, 0.0]);
        assert_eq!(e.predict(&x).unwrap(), vec![10.0; 4]);
    }

    #[test]
    fn predict_of_identical_constant_stacks_returns_the_constant() {
        let (x, _) = indexed_matrix(vec![0.0; 3]);
        let columns = x.column_names().to_vec();
        let stack_models = vec![
            constant_model(columns.clone(), 8.0),
            constant_model(columns, 8.0),
        ];
        let e = StackedHourEnsemble::from_parts(
            vec![],
            vec![],
            stack_models,
            vec![0.25, 0.75],
            0,
            DayClass::DayN,
        )
        .unwrap();
        assert_eq!(e.predict(&x).unwrap(), vec![8.0; 3]);
    }

    #[test]
    fn predict_rejects_mismatched_columns() {
        let (e, _) = two_constant_ensemble(vec![0.5, 0.5]);
        let mut groups = BTreeMap::new();
        groups.insert("other".to_string(), "other".to_string());
        let wrong = FeatureMatrix::new(
            vec!["other".to_string()],
            groups,
            Array2::zeros((2, 1)),
        )
        .unwrap();
        assert!(matches!(
            e.predict(&wrong),
            Err(EnsembleError::Sublearner(SublearnerError::ColumnMismatch(_)))
        ));
    }

    #[test]
    fn from_parts_rejects_bad_weights_and_columns() {
        let (x, _) = indexed_matrix(vec![0.0; 2]);
        let columns = x.column_names().to_vec();
        let stacks = || vec![constant_model(columns.clone(), 1.0)];
        assert!(matches!(
            StackedHourEnsemble::from_parts(vec![], vec![], stacks(), vec![0.9], 0, DayClass::Day1),
            Err(EnsembleError::InvalidModel(_))
        ));
        assert!(matches!(
            StackedHourEnsemble::from_parts(vec![], vec![], stacks(), vec![-1.0, 2.0], 0, DayClass::Day1),
            Err(EnsembleError::InvalidModel(_))
        ));
        assert!(matches!(
            StackedHourEnsemble::from_parts(vec![], vec![], vec![], vec![], 0, DayClass::Day1),
            Err(EnsembleError::EmptyCandidates)
        ));
        assert!(matches!(
            StackedHourEnsemble::from_parts(vec![], vec![], stacks(), vec![1.0], 24, DayClass::Day1),
            Err(EnsembleError::InvalidModel(_))
        ));
        // Base models present but stack columns lack the prediction column.
        let base = vec![constant_model(columns.clone(), 5.0)];
        assert!(matches!(
            StackedHourEnsemble::from_parts(
                base,
                vec!["base_pred_gbdt_a".to_string()],
                stacks(),
                vec![1.0],
                0,
                DayClass::Day1
            ),
            Err(EnsembleError::ColumnMismatch(_))
        ));
    }

    fn tiny_plan() -> EnsemblePlan {
        let base = vec![
            SublearnerSpec::new(SublearnerKind::GbdtA, 0)
                .with_hyperparameter("rounds", 20.0)
                .with_hyperparameter("max_depth", 3.0),
            SublearnerSpec::new(SublearnerKind::GbdtB, 0)
                .with_hyperparameter("rounds", 20.0)
                .with_hyperparameter("max_depth", 3.0),
            SublearnerSpec::new(SublearnerKind::Mlp, 0)
                .with_hyperparameter("epochs", 5.0)
                .with_hyperparameter("hidden1", 8.0)
                .with_hyperparameter("hidden2", 4.0)
                .with_hyperparameter("batch_size", 16.0),
        ];
        EnsemblePlan {
            base_specs: base.clone(),
            stack_specs: base,
            k_folds: 3,
            selection_iterations: 20,
            validation_fraction: 0.2,
        }
    }

    #[test]
    fn trained_ensemble_round_trips_bit_exactly_through_json() {
        let (x, y) = day1_examples(24 * 45, 9);
        let e = train_stacked_ensemble(&tiny_plan(), &x, &y, 42).unwrap();
        let json = e.to_json_string().unwrap();
        let back = StackedHourEnsemble::from_json_str(&json).unwrap();
        assert_eq!(back.to_json_string().unwrap(), json);
        assert_eq!(e.predict(&x).unwrap(), back.predict(&x).unwrap());
        assert_eq!(back.target_hour(), 9);
        assert_eq!(back.day_class(), DayClass::Day1);
        assert_eq!(back.weights().len(), 3);
        assert_eq!(
            back.base_pred_columns(),
            ["base_pred_gbdt_a", "base_pred_gbdt_b", "base_pred_mlp"]
        );
    }

    #[test]
    fn ensemble_json_rejects_tampering() {
        let (x, y) = day1_examples(24 * 40, 3);
        let mut plan = tiny_plan();
        plan.base_specs.truncate(1);
        plan.stack_specs.truncate(1);
        let e = train_stacked_ensemble(&plan, &x, &y, 1).unwrap();
        let json = e.to_json_string().unwrap();
        let bumped = json.replace("\"format_version\":1", "\"format_version\":2");
        assert!(StackedHourEnsemble::from_json_str(&bumped).is_err());
        let skewed = json.replace("\"weights\":[1.0]", "\"weights\":[0.7]");
        assert_ne!(json, skewed);
        assert!(StackedHourEnsemble::from_json_str(&skewed).is_err());
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let (x, y) = day1_examples(24 * 40, 6);
        let mut plan = tiny_plan();
        plan.base_specs.truncate(2);
        plan.stack_specs.truncate(2);
        let a = train_stacked_ensemble(&plan, &x, &y, 5).unwrap();
        let b = train_stacked_ensemble(&plan, &x, &y, 5).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
        let c = train_stacked_ensemble(&plan, &x, &y, 6).unwrap();
        assert_ne!(a.to_json_string().unwrap(), c.to_json_string().unwrap());
    }

    #[test]
    fn training_needs_enough_rows_for_folds_and_tail() {
        // 11 rows: a 2-row tail leaves a 9-row head, under the 10-row floor.
        let (x, y) = indexed_matrix((0..11).map(|i| 100.0 + i as f64).collect());
        let plan = EnsemblePlan {
            k_folds: 5,
            ..tiny_plan()
        };
        assert!(matches!(
            train_stacked_ensemble(&plan, &x, &y, 0),
            Err(EnsembleError::TooFewRows { .. })
        ));
    }

    #[test]
    fn plan_validation_rejects_bad_settings() {
        let mut p = EnsemblePlan::standard();
        p.validation_fraction = 0.5;
        assert!(matches!(p.validate(), Err(EnsembleError::BadPlan(_))));
        let mut p = EnsemblePlan::standard();
        p.stack_specs.clear();
        assert!(matches!(p.validate(), Err(EnsembleError::EmptyCandidates)));
        let mut p = EnsemblePlan::standard();
        p.k_folds = 1;
        assert!(matches!(p.validate(), Err(EnsembleError::BadFoldCount { k: 1 })));
    }
}
