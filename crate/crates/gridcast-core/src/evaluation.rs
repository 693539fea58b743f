//! Forecast quality metrics and diagnostics: MAPE, pooled per-day error
//! across rolling forecast origins, multi-seed report assembly, and grouped
//! permutation feature importance.
//!
//! All aggregation here is pooled: a day's error is one MAPE over every
//! (origin, hour) pair falling in that day window, not an average of
//! per-origin MAPEs. Reports record that choice so downstream consumers do
//! not have to guess.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TimeSeriesTable;
use crate::features::FeatureMatrix;
use crate::pipeline::ForecastResult;
use crate::seeding::derive_seed;

/// Hours per forecast day window.
pub const HOURS_PER_DAY: usize = 24;

/// Number of day windows a 96-hour forecast is scored over.
pub const FORECAST_DAYS: usize = 4;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("groundtruth has {truth} values but prediction has {prediction}")]
    LengthMismatch { truth: usize, prediction: usize },
    #[error("metric input is empty")]
    Empty,
    #[error("groundtruth value at index {0} is not a positive finite number")]
    NonpositiveGroundtruth(usize),
    #[error("prediction at index {0} is not finite")]
    NonFinitePrediction(usize),
    #[error("no valid groundtruth hours for day {0}")]
    NoValidHours(usize),
    #[error("unknown feature group `{0}`")]
    UnknownGroup(String),
    #[error("prediction failed during importance evaluation: {0}")]
    Prediction(String),
    #[error("importance repeats must be at least 1")]
    ZeroRepeats,
    #[error("report has no per-seed rows")]
    NoSeeds,
    #[error("report invariant violated: {0}")]
    ReportInvariant(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Mean absolute percentage error, in percent: (100/n) * sum |y - yhat| / y.
///
/// Every groundtruth value must be finite and strictly positive; callers
/// that tolerate invalid hours (see [`per_day_mape`]) filter before calling.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64, EvaluationError> {
    if y.len() != yhat.len() {
        return Err(EvaluationError::LengthMismatch {
            truth: y.len(),
            prediction: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(EvaluationError::Empty);
    }
    let mut acc = 0.0;
    for (i, (&t, &p)) in y.iter().zip(yhat).enumerate() {
        if !t.is_finite() || t <= 0.0 {
            return Err(EvaluationError::NonpositiveGroundtruth(i));
        }
        if !p.is_finite() {
            return Err(EvaluationError::NonFinitePrediction(i));
        }
        acc += (t - p).abs() / t;
    }
    Ok(100.0 * acc / y.len() as f64)
}

/// Pooled per-day MAPE over a set of 96-hour forecasts plus skip accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMapeSummary {
    /// MAPE (percent) for day windows 1..=4, pooled across origins.
    pub day_mape: [f64; FORECAST_DAYS],
    /// Hours scored per day window.
    pub pooled_hours: [u64; FORECAST_DAYS],
    /// Target hours excluded: whole days with missing groundtruth rows plus
    /// individual hours whose groundtruth CI is not a positive finite value.
    pub skipped_hours: u64,
}

/// Scores forecasts against groundtruth, pooling hours `[24(d-1), 24d)` of
/// every origin into one MAPE per day window `d`.
///
/// An (origin, day) cell whose 24 groundtruth rows are not all present (and
/// non-NaN) in `truth` is skipped whole; within retained cells, hours with
/// CI <= 0 are dropped individually. Both paths count into `skipped_hours`.
/// A day window left with zero valid hours is an error.
pub fn per_day_mape(
    forecasts: &[ForecastResult],
    truth: &TimeSeriesTable,
) -> Result<DayMapeSummary, EvaluationError> {
    let mut pools: [(Vec<f64>, Vec<f64>); FORECAST_DAYS] = Default::default();
    let mut skipped_hours = 0u64;
    for forecast in forecasts {
        for (day, pool) in pools.iter_mut().enumerate() {
            let mut cell: Vec<(f64, f64)> = Vec::with_capacity(HOURS_PER_DAY);
            let mut day_complete = true;
            for hour in day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY {
                let ts = forecast.origin + chrono::Duration::hours(hour as i64);
                let ci = truth
                    .index_of(ts)
                    .map(|i| truth.records()[i].carbon_intensity);
                match ci {
                    Some(v) if !v.is_nan() => cell.push((v, forecast.values[hour])),
                    _ => {
                        day_complete = false;
                        break;
                    }
                }
            }
            if !day_complete {
                skipped_hours += HOURS_PER_DAY as u64;
                continue;
            }
            for (t, p) in cell {
                if t.is_finite() && t > 0.0 {
                    pool.0.push(t);
                    pool.1.push(p);
                } else {
                    skipped_hours += 1;
                }
            }
        }
    }
    let mut day_mape = [0.0; FORECAST_DAYS];
    let mut pooled_hours = [0u64; FORECAST_DAYS];
    for (day, (t, p)) in pools.iter().enumerate() {
        if t.is_empty() {
            return Err(EvaluationError::NoValidHours(day + 1));
        }
        day_mape[day] = mape(t, p)?;
        pooled_hours[day] = t.len() as u64;
    }
    Ok(DayMapeSummary {
        day_mape,
        pooled_hours,
        skipped_hours,
    })
}

/// Per-seed and mean day-1..day-4 MAPE for one grid experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub grid_id: String,
    /// Seed -> [day1, day2, day3, day4] MAPE in percent.
    pub per_seed: BTreeMap<u64, [f64; FORECAST_DAYS]>,
    /// Arithmetic mean of the per-seed rows, day by day.
    pub mean: [f64; FORECAST_DAYS],
    /// Groundtruth hours excluded from scoring, per seed (identical across
    /// seeds: validity depends only on the groundtruth table).
    pub skipped_hours: u64,
    /// Forecast origins scored per seed.
    pub origins_evaluated: u64,
    /// Midnights in the test period that could not be forecast or scored
    /// (insufficient context, weather, or groundtruth coverage), per seed.
    pub origins_skipped: u64,
    /// How hours combine into a day's MAPE; always "pooled".
    pub aggregation: String,
    /// How forecast origins are chosen; always "daily-midnight-utc".
    pub origin_policy: String,
}

impl EvalReport {
    pub fn new(
        grid_id: impl Into<String>,
        per_seed: BTreeMap<u64, [f64; FORECAST_DAYS]>,
        skipped_hours: u64,
        origins_evaluated: u64,
        origins_skipped: u64,
    ) -> Result<Self, EvaluationError> {
        if per_seed.is_empty() {
            return Err(EvaluationError::NoSeeds);
        }
        let mut mean = [0.0; FORECAST_DAYS];
        for row in per_seed.values() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= per_seed.len() as f64;
        }
        let report = EvalReport {
            grid_id: grid_id.into(),
            per_seed,
            mean,
            skipped_hours,
            origins_evaluated,
            origins_skipped,
            aggregation: "pooled".to_string(),
            origin_policy: "daily-midnight-utc".to_string(),
        };
        report.validate()?;
        Ok(report)
    }

    /// Checks the mean row against the per-seed rows (tolerance 1e-12).
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.per_seed.is_empty() {
            return Err(EvaluationError::NoSeeds);
        }
        for day in 0..FORECAST_DAYS {
            let sum: f64 = self.per_seed.values().map(|row| row[day]).sum();
            let expect = sum / self.per_seed.len() as f64;
            if (expect - self.mean[day]).abs() > 1e-12 {
                return Err(EvaluationError::ReportInvariant(format!(
                    "mean[{day}] = {} but per-seed rows average to {expect}",
                    self.mean[day]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String, EvaluationError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, EvaluationError> {
        let report: EvalReport = serde_json::from_str(s)?;
        report.validate()?;
        Ok(report)
    }

    /// Fixed-width table for terminal output.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("grid: {}\n", self.grid_id));
        out.push_str(&format!(
            "{:>12} {:>9} {:>9} {:>9} {:>9}\n",
            "seed", "day1", "day2", "day3", "day4"
        ));
        for (seed, row) in &self.per_seed {
            out.push_str(&format!(
                "{seed:>12} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
                row[0], row[1], row[2], row[3]
            ));
        }
        out.push_str(&format!(
            "{:>12} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            "mean", self.mean[0], self.mean[1], self.mean[2], self.mean[3]
        ));
        out.push_str(&format!(
            "origins evaluated: {} (skipped {}), invalid hours: {}, aggregation: {}\n",
            self.origins_evaluated, self.origins_skipped, self.skipped_hours, self.aggregation
        ));
        out
    }
}

/// Mean and spread of the MAPE increase caused by shuffling one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceStat {
    /// Mean over repeats of (shuffled MAPE - baseline MAPE), percent points.
    pub mean_mape_increase: f64,
    /// Population standard deviation over repeats; 0 when repeats = 1.
    pub std: f64,
}

/// Permutation importance of every feature group of a validation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub groups: BTreeMap<String, ImportanceStat>,
    pub repeats: u32,
    pub baseline_mape: f64,
}

impl ImportanceReport {
    pub fn to_json_string(&self) -> Result<String, EvaluationError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, EvaluationError> {
        Ok(serde_json::from_str(s)?)
    }

    /// Groups by descending importance, then alphabetical.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "baseline MAPE: {:.4} (repeats: {})\n{:>32} {:>14} {:>12}\n",
            self.baseline_mape, self.repeats, "group", "mape_increase", "std"
        ));
        for (group, stat) in top_k_features(self, self.groups.len()) {
            let stat_std = self.groups[&group].std;
            out.push_str(&format!("{group:>32} {stat:>14.4} {stat_std:>12.4}\n"));
        }
        out
    }
}

/// In-place Fisher-Yates shuffle of `0..n` driven by `rng`.
fn random_permutation(n: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Grouped permutation importance: for each feature group, all of its
/// columns are reordered by one shared row permutation, the model is
/// re-scored, and the MAPE increase over the unshuffled baseline is averaged
/// over `repeats` independent permutations.
///
/// `predict` must be pure; a shuffle that leaves the matrix bitwise
/// unchanged (a constant group) then scores an increase of exactly 0.
/// `groups` restricts the report to the named groups (None = all groups of
/// `x_val` in first-appearance column order).
pub fn permutation_importance<F>(
    predict: F,
    x_val: &FeatureMatrix,
    y_val: &[f64],
    groups: Option<&[String]>,
    repeats: u32,
    seed: u64,
) -> Result<ImportanceReport, EvaluationError>
where
    F: Fn(&FeatureMatrix) -> Result<Vec<f64>, EvaluationError> + Sync,
{
    if repeats == 0 {
        return Err(EvaluationError::ZeroRepeats);
    }
    if y_val.len() != x_val.n_rows() {
        return Err(EvaluationError::LengthMismatch {
            truth: y_val.len(),
            prediction: x_val.n_rows(),
        });
    }
    let all_groups = x_val.groups();
    let selected: Vec<String> = match groups {
        Some(want) => {
            for g in want {
                if !all_groups.contains(g) {
                    return Err(EvaluationError::UnknownGroup(g.clone()));
                }
            }
            want.to_vec()
        }
        None => all_groups,
    };
    let baseline_mape = mape(y_val, &predict(x_val)?)?;

    // One task per (group, repeat); seeds derive from the task coordinates
    // so results do not depend on scheduling.
    let tasks: Vec<(usize, u32)> = selected
        .iter()
        .enumerate()
        .flat_map(|(gi, _)| (0..repeats).map(move |r| (gi, r)))
        .collect();
    let deltas: Vec<f64> = tasks
        .par_iter()
        .map(|&(gi, r)| {
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(
                seed,
                &[gi as u64, u64::from(r)],
            ));
            let perm = random_permutation(x_val.n_rows(), &mut rng);
            let shuffled = x_val.with_group_permuted(&selected[gi], &perm);
            let score = mape(y_val, &predict(&shuffled)?)?;
            Ok(score - baseline_mape)
        })
        .collect::<Result<_, EvaluationError>>()?;

    let mut out = BTreeMap::new();
    for (gi, group) in selected.iter().enumerate() {
        let slice = &deltas[gi * repeats as usize..(gi + 1) * repeats as usize];
        let mean = slice.iter().sum::<f64>() / f64::from(repeats);
        let var = slice.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / f64::from(repeats);
        out.insert(
            group.clone(),
            ImportanceStat {
                mean_mape_increase: mean,
                std: var.sqrt(),
            },
        );
    }
    Ok(ImportanceReport {
        groups: out,
        repeats,
        baseline_mape,
    })
}

/// Top `k` feature groups by descending importance; ties break alphabetically.
pub fn top_k_features(report: &ImportanceReport, k: usize) -> Vec<(String, f64)> {
    // BTreeMap iteration is alphabetical, so a stable sort on score alone
    // leaves ties in name order.
    let mut ranked: Vec<(String, f64)> = report
        .groups
        .iter()
        .map(|(g, s)| (g.clone(), s.mean_mape_increase))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    ranked.truncate(k);
    ranked
}
