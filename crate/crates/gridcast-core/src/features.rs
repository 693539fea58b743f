//! Supervised-example construction: flattened lag windows, cyclic datetime
//! encodings, and forward weather windows.
//!
//! Column layout is a pure function of the table schema and the day class,
//! so feature rows assembled at inference time line up with training
//! matrices by construction. Day-1 rows carry previous-day carbon-intensity
//! and per-source generation lags; day-N rows drop the source lags because
//! recursion beyond the first day has no groundtruth generation data.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use chrono::{Datelike, TimeDelta, Timelike};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

use crate::dataset::{TableSchema, TimeSeriesTable, Timestamp};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cyclic period must be positive, got {0}")]
    NonpositivePeriod(f64),
    #[error("target hour must be in 0..=23, got {0}")]
    InvalidTargetHour(usize),
    #[error("not enough history: {0}")]
    InsufficientHistory(String),
    #[error("column `{column}` has a non-finite value")]
    NonFinite { column: String },
    #[error("no rows")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Whether a feature row describes a next-day forecast (with source lags)
/// or a later recursive day (carbon-intensity lags only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayClass {
    Day1,
    DayN,
}

/// Cyclic datetime column names, in layout order.
pub const DATETIME_COLUMNS: [&str; 6] = [
    "hour_sin", "hour_cos", "dow_sin", "dow_cos", "doy_sin", "doy_cos",
];

/// Maps `value` on a cycle of length `period` to the unit circle.
pub fn encode_cyclic(value: f64, period: f64) -> Result<(f64, f64), FeatureError> {
    if !(period > 0.0) {
        return Err(FeatureError::NonpositivePeriod(period));
    }
    let angle = TAU * value / period;
    Ok((angle.sin(), angle.cos()))
}

/// The six cyclic encodings of a timestamp: hour of day (period 24),
/// day of week (period 7, Monday = 0), day of year (period 366, Jan 1 = 0).
pub fn datetime_features(ts: Timestamp) -> [f64; 6] {
    let enc = |v: f64, p: f64| encode_cyclic(v, p).expect("period is positive");
    let (hour_sin, hour_cos) = enc(ts.hour() as f64, 24.0);
    let (dow_sin, dow_cos) = enc(ts.weekday().num_days_from_monday() as f64, 7.0);
    let (doy_sin, doy_cos) = enc(ts.ordinal0() as f64, 366.0);
    [hour_sin, hour_cos, dow_sin, dow_cos, doy_sin, doy_cos]
}

/// Named-column numeric matrix with a group label per column.
///
/// Groups bundle the 24 lag columns of one variable (for permutation
/// importance) and the datetime block; entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    group_of: BTreeMap<String, String>,
    rows: Array2<f64>,
}

impl FeatureMatrix {
    /// Validating constructor: width agreement, a group for every column,
    /// and no NaN or infinite entries.
    pub fn new(
        column_names: Vec<String>,
        group_of: BTreeMap<String, String>,
        rows: Array2<f64>,
    ) -> Result<Self, FeatureError> {
        if rows.ncols() != column_names.len() {
            return Err(FeatureError::Shape(format!(
                "matrix has {} columns but {} names",
                rows.ncols(),
                column_names.len()
            )));
        }
        for name in &column_names {
            if !group_of.contains_key(name) {
                return Err(FeatureError::Shape(format!("column `{name}` has no group")));
            }
        }
        for (j, col) in rows.columns().into_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite {
                    column: column_names[j].clone(),
                });
            }
        }
        Ok(FeatureMatrix {
            column_names,
            group_of,
            rows,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        self.column_index(name).map(|j| self.rows.column(j))
    }

    pub fn group_of(&self, column: &str) -> Option<&str> {
        self.group_of.get(column).map(String::as_str)
    }

    /// Distinct group names in first-appearance (column) order.
    pub fn groups(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for name in &self.column_names {
            let g = &self.group_of[name];
            if !seen.contains(g) {
                seen.push(g.clone());
            }
        }
        seen
    }

    pub fn columns_in_group(&self, group: &str) -> Vec<usize> {
        self.column_names
            .iter()
            .enumerate()
            .filter(|(_, name)| self.group_of[*name] == group)
            .map(|(j, _)| j)
            .collect()
    }

    /// Row subset in the given order; indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            group_of: self.group_of.clone(),
            rows: self.rows.select(Axis(0), indices),
        }
    }

    /// Copy with the rows of every column in `group` reordered by `perm`
    /// (new row i takes the old value at `perm[i]`); other columns as-is.
    pub fn with_group_permuted(&self, group: &str, perm: &[usize]) -> FeatureMatrix {
        debug_assert_eq!(perm.len(), self.n_rows());
        let mut rows = self.rows.clone();
        for j in self.columns_in_group(group) {
            let original = self.rows.column(j);
            let mut target = rows.column_mut(j);
            for (i, &src) in perm.iter().enumerate() {
                target[i] = original[src];
            }
        }
        FeatureMatrix {
            column_names: self.column_names.clone(),
            group_of: self.group_of.clone(),
            rows,
        }
    }

    /// New matrix with extra named columns appended on the right.
    pub fn append_columns(
        &self,
        extra: &[(String, String, Vec<f64>)],
    ) -> Result<FeatureMatrix, FeatureError> {
        let n = self.n_rows();
        let mut column_names = self.column_names.clone();
        let mut group_of = self.group_of.clone();
        let mut rows = Array2::zeros((n, self.n_cols() + extra.len()));
        rows.slice_mut(ndarray::s![.., ..self.n_cols()])
            .assign(&self.rows);
        for (k, (name, group, values)) in extra.iter().enumerate() {
            if values.len() != n {
                return Err(FeatureError::Shape(format!(
                    "column `{name}` has {} values for {} rows",
                    values.len(),
                    n
                )));
            }
            column_names.push(name.clone());
            group_of.insert(name.clone(), group.clone());
            for (i, v) in values.iter().enumerate() {
                rows[(i, self.n_cols() + k)] = *v;
            }
        }
        FeatureMatrix::new(column_names, group_of, rows)
    }
}

/// Target values paired with a FeatureMatrix, one per example row.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub target_hour: usize,
    /// 1 for next-day examples, 2 for the shared recursive-day model.
    pub target_day: usize,
}

/// Column names and group map for a schema and day class. Layout order:
/// CI lags, per-source lags (day 1 only, alphabetical), datetime block,
/// per-weather forward windows (alphabetical).
pub fn feature_layout(
    schema: &TableSchema,
    day_class: DayClass,
) -> (Vec<String>, BTreeMap<String, String>) {
    let mut names = Vec::new();
    let mut groups = BTreeMap::new();
    let push_block = |names: &mut Vec<String>, groups: &mut BTreeMap<String, String>, base: &str| {
        for h in 0..24 {
            let name = format!("{base}_h{h:02}");
            groups.insert(name.clone(), base.to_string());
            names.push(name);
        }
    };
    push_block(&mut names, &mut groups, "hist_CI");
    if day_class == DayClass::Day1 {
        for source in schema.sources() {
            push_block(&mut names, &mut groups, &format!("hist_{source}"));
        }
    }
    for col in DATETIME_COLUMNS {
        names.push(col.to_string());
        groups.insert(col.to_string(), "datetime".to_string());
    }
    for weather in schema.weather() {
        push_block(&mut names, &mut groups, weather);
    }
    (names, groups)
}

/// Everything needed to assemble one feature row.
///
/// Lag slices hold the previous day's hours 0..=23; weather slices hold the
/// target day's hours 0..=23. `source_lags` is ignored for [`DayClass::DayN`].
pub struct RowInputs<'a> {
    pub ci_lags: &'a [f64],
    pub source_lags: &'a BTreeMap<String, Vec<f64>>,
    pub target_ts: Timestamp,
    pub weather: &'a BTreeMap<String, Vec<f64>>,
}

/// Assembles one feature row in [`feature_layout`] order, validating widths
/// and finiteness. Shared by the training builders and recursive inference
/// so the two can never disagree on layout.
pub fn assemble_row(
    schema: &TableSchema,
    day_class: DayClass,
    inputs: &RowInputs<'_>,
) -> Result<Vec<f64>, FeatureError> {
    let take24 = |name: &str, values: Option<&Vec<f64>>| -> Result<Vec<f64>, FeatureError> {
        let values = values.ok_or_else(|| {
            FeatureError::Shape(format!("missing values for column block `{name}`"))
        })?;
        if values.len() != 24 {
            return Err(FeatureError::Shape(format!(
                "block `{name}` has {} values, expected 24",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                column: name.to_string(),
            });
        }
        Ok(values.clone())
    };

    let mut row = Vec::new();
    if inputs.ci_lags.len() != 24 {
        return Err(FeatureError::Shape(format!(
            "block `hist_CI` has {} values, expected 24",
            inputs.ci_lags.len()
        )));
    }
    if inputs.ci_lags.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            column: "hist_CI".to_string(),
        });
    }
    row.extend_from_slice(inputs.ci_lags);
    if day_class == DayClass::Day1 {
        for source in schema.sources() {
            row.extend(take24(
                &format!("hist_{source}"),
                inputs.source_lags.get(source),
            )?);
        }
    }
    row.extend(datetime_features(inputs.target_ts));
    for weather in schema.weather() {
        row.extend(take24(weather, inputs.weather.get(weather))?);
    }
    Ok(row)
}

/// Six cyclic columns per timestamp, all in group "datetime".
pub fn build_datetime_block(timestamps: &[Timestamp]) -> Result<FeatureMatrix, FeatureError> {
    if timestamps.is_empty() {
        return Err(FeatureError::Empty);
    }
    let mut data = Vec::with_capacity(timestamps.len() * 6);
    for &ts in timestamps {
        data.extend(datetime_features(ts));
    }
    let rows = Array2::from_shape_vec((timestamps.len(), 6), data).expect("fixed width");
    let names: Vec<String> = DATETIME_COLUMNS.iter().map(|s| s.to_string()).collect();
    let groups = names
        .iter()
        .map(|n| (n.clone(), "datetime".to_string()))
        .collect();
    FeatureMatrix::new(names, groups, rows)
}

/// Next-day training examples: previous-day CI and source lags, the target
/// timestamp's datetime block, and the target day's weather windows.
pub fn build_day1_examples(
    table: &TimeSeriesTable,
    target_hour: usize,
) -> Result<(FeatureMatrix, TargetVector), FeatureError> {
    build_examples(table, target_hour, DayClass::Day1)
}

/// Recursive-day training examples: as day 1 but without source lags. The
/// CI lags are the groundtruth previous day here (teacher forcing); at
/// inference they are the previous iteration's predictions.
pub fn build_dayn_examples(
    table: &TimeSeriesTable,
    target_hour: usize,
) -> Result<(FeatureMatrix, TargetVector), FeatureError> {
    build_examples(table, target_hour, DayClass::DayN)
}

fn build_examples(
    table: &TimeSeriesTable,
    target_hour: usize,
    day_class: DayClass,
) -> Result<(FeatureMatrix, TargetVector), FeatureError> {
    if target_hour > 23 {
        return Err(FeatureError::InvalidTargetHour(target_hour));
    }
    if table.len() < 49 {
        return Err(FeatureError::InsufficientHistory(format!(
            "table has {} rows; at least 49 hourly rows are required",
            table.len()
        )));
    }
    let schema = table.schema();
    let records = table.records();
    let (names, groups) = feature_layout(schema, day_class);

    let mut data: Vec<f64> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    'days: for midnight in records
        .iter()
        .map(|r| r.timestamp)
        .filter(|t| t.hour() == 0)
    {
        // Previous-day window (hours 0..=23 of day D-1) and target-day window.
        let mut prev = [0usize; 24];
        let mut day = [0usize; 24];
        for h in 0..24 {
            match table.index_of(midnight - TimeDelta::hours(24 - h as i64)) {
                Some(i) => prev[h] = i,
                None => continue 'days,
            }
            match table.index_of(midnight + TimeDelta::hours(h as i64)) {
                Some(i) => day[h] = i,
                None => continue 'days,
            }
        }
        let target = records[day[target_hour]].carbon_intensity;
        if !target.is_finite() {
            continue;
        }

        let ci_lags: Vec<f64> = prev.iter().map(|&i| records[i].carbon_intensity).collect();
        let mut source_lags = BTreeMap::new();
        if day_class == DayClass::Day1 {
            for source in schema.sources() {
                let lags: Vec<f64> = prev.iter().map(|&i| records[i].source_mw[source]).collect();
                source_lags.insert(source.clone(), lags);
            }
        }
        let mut weather = BTreeMap::new();
        for w in schema.weather() {
            let window: Vec<f64> = day.iter().map(|&i| records[i].weather[w]).collect();
            weather.insert(w.clone(), window);
        }
        let inputs = RowInputs {
            ci_lags: &ci_lags,
            source_lags: &source_lags,
            target_ts: midnight + TimeDelta::hours(target_hour as i64),
            weather: &weather,
        };
        match assemble_row(schema, day_class, &inputs) {
            Ok(row) => {
                data.extend(row);
                targets.push(target);
            }
            // A NaN cell inside the window: no example for this day.
            Err(FeatureError::NonFinite { .. }) => continue,
            Err(e) => return Err(e),
        }
    }

    if targets.is_empty() {
        return Err(FeatureError::InsufficientHistory(
            "no day has a complete previous-day window and target-day weather".to_string(),
        ));
    }
    let n = targets.len();
    let rows = Array2::from_shape_vec((n, names.len()), data).expect("constant row width");
    let matrix = FeatureMatrix::new(names, groups, rows)?;
    let target_day = if day_class == DayClass::Day1 { 1 } else { 2 };
    Ok((
        matrix,
        TargetVector {
            values: targets,
            target_hour,
            target_day,
        },
    ))
}
