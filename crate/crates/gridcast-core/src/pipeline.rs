//! Horizon models and the 96-hour forecast loop.
//!
//! Two models cover the horizon: a day-1 model whose lag features come from
//! recorded history, and one shared recursive-day model that is re-applied
//! for days 2 through 4, each pass consuming the previous day's 24
//! predictions as its carbon-intensity lags. Each model holds 24 per-hour
//! stacked ensembles.
//!
//! [`run_experiment`] drives the whole evaluation: per seed it trains both
//! models on the pre-cutoff rows, rolls a forecast from every UTC midnight
//! in the test period, and pools errors per horizon day.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveTime, SecondsFormat, TimeDelta};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::dataset::{split_train_test, DatasetError, TimeSeriesTable, Timestamp};
use crate::ensemble::{train_stacked_ensemble, EnsembleError, EnsemblePlan, StackedHourEnsemble};
use crate::evaluation::{per_day_mape, EvalReport, EvaluationError};
use crate::features::{
    assemble_row, build_day1_examples, build_dayn_examples, feature_layout, DayClass, FeatureError,
    FeatureMatrix, RowInputs,
};
use crate::FORMAT_VERSION;

/// Forecast length in hours: four days.
pub const HORIZON_HOURS: usize = 96;

/// First horizon hour of each forecast day.
pub const DAY_BOUNDARIES: [usize; 4] = [0, 24, 48, 72];

/// Shortest training table accepted, in full days.
pub const MIN_TRAINING_DAYS: i64 = 60;

const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("training table spans {days} full days; need at least {needed}")]
    InsufficientHistory { days: i64, needed: i64 },
    #[error("missing or non-finite weather forecast at horizon hour {hour}")]
    MissingWeather { hour: usize },
    #[error("incomplete forecast context: {0}")]
    MissingContext(String),
    #[error("forecast origin {0} is not a UTC midnight")]
    NotMidnight(Timestamp),
    #[error("invalid forecast: {0}")]
    InvalidForecast(String),
    #[error("invalid horizon model: {0}")]
    InvalidModel(String),
    #[error("unsupported format_version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("forecast CSV: {0}")]
    CsvSchema(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    StreamIo(#[from] std::io::Error),
}

fn stamp(ts: Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn is_midnight(ts: Timestamp) -> bool {
    ts.time() == NaiveTime::MIN
}

/// One 96-hour forecast rolled from a UTC-midnight origin.
///
/// `values[h]` predicts carbon intensity at `origin + h` hours; hours 0-23
/// come from the day-1 model, the rest from the recursive-day model.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub origin: Timestamp,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl ForecastResult {
    pub fn new(origin: Timestamp, values: Vec<f64>, seed: u64) -> Result<Self, PipelineError> {
        if !is_midnight(origin) {
            return Err(PipelineError::NotMidnight(origin));
        }
        if values.len() != HORIZON_HOURS {
            return Err(PipelineError::InvalidForecast(format!(
                "expected {HORIZON_HOURS} hourly values, got {}",
                values.len()
            )));
        }
        if let Some(h) = values.iter().position(|v| !v.is_finite()) {
            return Err(PipelineError::InvalidForecast(format!(
                "non-finite value at horizon hour {h}"
            )));
        }
        Ok(ForecastResult {
            origin,
            values,
            seed,
        })
    }

    /// First horizon hour of each forecast day.
    pub fn day_boundaries(&self) -> [usize; 4] {
        DAY_BOUNDARIES
    }
}

const FORECAST_CSV_HEADER: [&str; 4] = ["datetime", "predicted_ci", "horizon_hour", "seed"];

/// Writes forecasts as CSV rows `datetime,predicted_ci,horizon_hour,seed`,
/// one row per horizon hour. Values print with the shortest digits that
/// parse back to the same bits, so writing is deterministic and reading
/// loses nothing.
pub fn write_forecast_csv<W: Write>(
    forecasts: &[ForecastResult],
    writer: W,
) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FORECAST_CSV_HEADER)?;
    for forecast in forecasts {
        for (h, value) in forecast.values.iter().enumerate() {
            let ts = forecast.origin + TimeDelta::hours(h as i64);
            w.write_record(&[
                stamp(ts),
                value.to_string(),
                h.to_string(),
                forecast.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses and validates a forecast CSV (an untrusted input). Rows must form
/// complete 96-hour blocks with ascending `horizon_hour`, a constant seed
/// per block, and datetimes consistent with the block's origin.
pub fn read_forecast_csv<R: Read>(reader: R) -> Result<Vec<ForecastResult>, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != FORECAST_CSV_HEADER.len()
        || headers.iter().zip(FORECAST_CSV_HEADER).any(|(a, b)| a != b)
    {
        return Err(PipelineError::CsvSchema(format!(
            "expected header `{}`, got `{}`",
            FORECAST_CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    // Origin timestamp, seed, and values of the block being read.
    let mut block: Option<(Timestamp, u64, Vec<f64>)> = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |idx: usize, name: &str| -> Result<&str, PipelineError> {
            record.get(idx).ok_or_else(|| {
                PipelineError::CsvSchema(format!("line {line}: missing field `{name}`"))
            })
        };
        let ts: Timestamp = field(0, "datetime")?.parse().map_err(|_| {
            PipelineError::CsvSchema(format!(
                "line {line}: bad datetime `{}`",
                field(0, "datetime").unwrap_or_default()
            ))
        })?;
        let value: f64 = field(1, "predicted_ci")?.parse().map_err(|_| {
            PipelineError::CsvSchema(format!("line {line}: bad predicted_ci"))
        })?;
        let hour: usize = field(2, "horizon_hour")?.parse().map_err(|_| {
            PipelineError::CsvSchema(format!("line {line}: bad horizon_hour"))
        })?;
        let seed: u64 = field(3, "seed")?.parse().map_err(|_| {
            PipelineError::CsvSchema(format!("line {line}: bad seed"))
        })?;
        if hour >= HORIZON_HOURS {
            return Err(PipelineError::CsvSchema(format!(
                "line {line}: horizon_hour {hour} out of range 0..{HORIZON_HOURS}"
            )));
        }
        if hour == 0 {
            if let Some((origin, block_seed, values)) = block.take() {
                if values.len() != HORIZON_HOURS {
                    return Err(PipelineError::CsvSchema(format!(
                        "line {line}: previous forecast block has {} of {HORIZON_HOURS} hours",
                        values.len()
                    )));
                }
                out.push(ForecastResult::new(origin, values, block_seed)?);
            }
            block = Some((ts, seed, vec![value]));
            continue;
        }
        let Some((origin, block_seed, values)) = block.as_mut() else {
            return Err(PipelineError::CsvSchema(format!(
                "line {line}: forecast block must start at horizon_hour 0"
            )));
        };
        if hour != values.len() {
            return Err(PipelineError::CsvSchema(format!(
                "line {line}: expected horizon_hour {}, got {hour}",
                values.len()
            )));
        }
        if seed != *block_seed {
            return Err(PipelineError::CsvSchema(format!(
                "line {line}: seed changed mid-block from {block_seed} to {seed}"
            )));
        }
        if ts != *origin + TimeDelta::hours(hour as i64) {
            return Err(PipelineError::CsvSchema(format!(
                "line {line}: datetime does not equal origin plus horizon_hour"
            )));
        }
        values.push(value);
    }
    if let Some((origin, seed, values)) = block.take() {
        if values.len() != HORIZON_HOURS {
            return Err(PipelineError::CsvSchema(format!(
                "file ends with an incomplete forecast block of {} hours",
                values.len()
            )));
        }
        out.push(ForecastResult::new(origin, values, seed)?);
    }
    if out.is_empty() {
        return Err(PipelineError::CsvSchema("no forecast rows".to_string()));
    }
    Ok(out)
}

/// A full set of 24 per-hour ensembles for one horizon day class.
#[derive(Debug, Clone)]
pub struct HorizonModel {
    hour_ensembles: Vec<StackedHourEnsemble>,
    day_class: DayClass,
    grid_id: String,
    training_window: (Timestamp, Timestamp),
    seed: u64,
}

#[derive(Serialize)]
struct HorizonFileRef<'a> {
    format_version: u32,
    grid_id: &'a str,
    day_class: DayClass,
    training_window: (Timestamp, Timestamp),
    seed: u64,
    hour_ensembles: &'a [StackedHourEnsemble],
}

#[derive(Deserialize)]
struct HorizonFile {
    format_version: u32,
    grid_id: String,
    day_class: DayClass,
    training_window: (Timestamp, Timestamp),
    seed: u64,
    hour_ensembles: Vec<StackedHourEnsemble>,
}

impl Serialize for HorizonModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        HorizonFileRef {
            format_version: FORMAT_VERSION,
            grid_id: &self.grid_id,
            day_class: self.day_class,
            training_window: self.training_window,
            seed: self.seed,
            hour_ensembles: &self.hour_ensembles,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HorizonModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = HorizonFile::deserialize(deserializer)?;
        if file.format_version != FORMAT_VERSION {
            return Err(serde::de::Error::custom(
                PipelineError::VersionMismatch {
                    found: file.format_version,
                    expected: FORMAT_VERSION,
                },
            ));
        }
        HorizonModel::from_parts(
            file.hour_ensembles,
            file.day_class,
            file.grid_id,
            file.training_window,
            file.seed,
        )
        .map_err(serde::de::Error::custom)
    }
}

impl HorizonModel {
    pub fn from_parts(
        hour_ensembles: Vec<StackedHourEnsemble>,
        day_class: DayClass,
        grid_id: String,
        training_window: (Timestamp, Timestamp),
        seed: u64,
    ) -> Result<Self, PipelineError> {
        if hour_ensembles.len() != HOURS_PER_DAY {
            return Err(PipelineError::InvalidModel(format!(
                "expected {HOURS_PER_DAY} hour ensembles, got {}",
                hour_ensembles.len()
            )));
        }
        if grid_id.is_empty() {
            return Err(PipelineError::InvalidModel("empty grid_id".to_string()));
        }
        if training_window.0 > training_window.1 {
            return Err(PipelineError::InvalidModel(
                "training window ends before it starts".to_string(),
            ));
        }
        for (h, ensemble) in hour_ensembles.iter().enumerate() {
            if ensemble.target_hour() != h {
                return Err(PipelineError::InvalidModel(format!(
                    "ensemble at index {h} targets hour {}",
                    ensemble.target_hour()
                )));
            }
            if ensemble.day_class() != day_class {
                return Err(PipelineError::InvalidModel(format!(
                    "ensemble for hour {h} has a different day class than the model"
                )));
            }
            if ensemble.raw_columns() != hour_ensembles[0].raw_columns() {
                return Err(PipelineError::InvalidModel(format!(
                    "ensemble for hour {h} disagrees on feature columns"
                )));
            }
        }
        Ok(HorizonModel {
            hour_ensembles,
            day_class,
            grid_id,
            training_window,
            seed,
        })
    }

    pub fn hour_ensembles(&self) -> &[StackedHourEnsemble] {
        &self.hour_ensembles
    }

    pub fn day_class(&self) -> DayClass {
        self.day_class
    }

    pub fn grid_id(&self) -> &str {
        &self.grid_id
    }

    pub fn training_window(&self) -> (Timestamp, Timestamp) {
        self.training_window
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw feature columns shared by all 24 hour ensembles.
    pub fn raw_columns(&self) -> &[String] {
        self.hour_ensembles[0].raw_columns()
    }

    pub fn to_json_string(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and validates a persisted horizon model (an untrusted input).
    pub fn from_json_str(s: &str) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(path, self.to_json_string()?).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// Trains the day-1 and recursive-day horizon models on one table.
///
/// The 24 hour ensembles of each model train independently (in parallel);
/// each takes its seed from the run seed and its (day class, hour)
/// coordinates, so results do not depend on thread count.
pub fn train_horizon_models(
    train: &TimeSeriesTable,
    plan: &EnsemblePlan,
    seed: u64,
) -> Result<(HorizonModel, HorizonModel), PipelineError> {
    let span_hours = (train.last_timestamp() - train.first_timestamp()).num_hours() + 1;
    let days = span_hours / HOURS_PER_DAY as i64;
    if days < MIN_TRAINING_DAYS {
        return Err(PipelineError::InsufficientHistory {
            days,
            needed: MIN_TRAINING_DAYS,
        });
    }
    let day1 = train_one_horizon(train, plan, DayClass::Day1, seed)?;
    let dayn = train_one_horizon(train, plan, DayClass::DayN, seed)?;
    Ok((day1, dayn))
}

fn train_one_horizon(
    train: &TimeSeriesTable,
    plan: &EnsemblePlan,
    day_class: DayClass,
    seed: u64,
) -> Result<HorizonModel, PipelineError> {
    // Seed-derivation label: 1 for day-1, 2 for the recursive-day model.
    let class_label = match day_class {
        DayClass::Day1 => 1u64,
        DayClass::DayN => 2u64,
    };
    let hour_ensembles: Vec<StackedHourEnsemble> = (0..HOURS_PER_DAY)
        .into_par_iter()
        .map(|hour| -> Result<StackedHourEnsemble, PipelineError> {
            let (x, y) = match day_class {
                DayClass::Day1 => build_day1_examples(train, hour)?,
                DayClass::DayN => build_dayn_examples(train, hour)?,
            };
            let hour_seed = crate::seeding::derive_seed(seed, &[class_label, hour as u64]);
            Ok(train_stacked_ensemble(plan, &x, &y, hour_seed)?)
        })
        .collect::<Result<_, _>>()?;
    HorizonModel::from_parts(
        hour_ensembles,
        day_class,
        train.grid_id().to_string(),
        (train.first_timestamp(), train.last_timestamp()),
        seed,
    )
}

/// Extracts the 96-hour weather block starting at `origin` from a table's
/// recorded forecast columns.
pub fn weather_block_from_table(
    table: &TimeSeriesTable,
    origin: Timestamp,
) -> Result<BTreeMap<String, Vec<f64>>, PipelineError> {
    let mut block: BTreeMap<String, Vec<f64>> = table
        .schema()
        .weather()
        .iter()
        .map(|var| (var.clone(), Vec::with_capacity(HORIZON_HOURS)))
        .collect();
    for hour in 0..HORIZON_HOURS {
        let ts = origin + TimeDelta::hours(hour as i64);
        let idx = table
            .index_of(ts)
            .ok_or(PipelineError::MissingWeather { hour })?;
        let record = &table.records()[idx];
        for (var, values) in block.iter_mut() {
            let v = record.weather.get(var).copied().unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(PipelineError::MissingWeather { hour });
            }
            values.push(v);
        }
    }
    Ok(block)
}

fn weather_window(
    future_weather: &BTreeMap<String, Vec<f64>>,
    schema_weather: &[String],
    day: usize,
) -> BTreeMap<String, Vec<f64>> {
    schema_weather
        .iter()
        .map(|var| {
            let range = HOURS_PER_DAY * day..HOURS_PER_DAY * (day + 1);
            (var.clone(), future_weather[var][range].to_vec())
        })
        .collect()
}

fn one_row_matrix(
    names: &[String],
    groups: &BTreeMap<String, String>,
    row: Vec<f64>,
) -> Result<FeatureMatrix, PipelineError> {
    let width = row.len();
    let rows = Array2::from_shape_vec((1, width), row)
        .map_err(|e| PipelineError::InvalidForecast(e.to_string()))?;
    Ok(FeatureMatrix::new(names.to_vec(), groups.clone(), rows)?)
}

/// Rolls one 96-hour forecast from a UTC-midnight origin.
///
/// Hours 0-23 use the day-1 model with groundtruth lags from the trailing
/// 24 hours of `context`. Hours 24-95 apply the recursive-day model three
/// times; each pass takes the previous day's 24 predictions as its lags.
/// `future_weather` must cover every schema weather variable for all 96
/// horizon hours. Context rows at or after `origin` are never read.
pub fn forecast_96h(
    day1: &HorizonModel,
    dayn: &HorizonModel,
    context: &TimeSeriesTable,
    future_weather: &BTreeMap<String, Vec<f64>>,
    origin: Timestamp,
) -> Result<ForecastResult, PipelineError> {
    if !is_midnight(origin) {
        return Err(PipelineError::NotMidnight(origin));
    }
    if day1.day_class() != DayClass::Day1 || dayn.day_class() != DayClass::DayN {
        return Err(PipelineError::InvalidModel(
            "expected the day-1 model first and the recursive-day model second".to_string(),
        ));
    }
    if day1.seed() != dayn.seed() {
        return Err(PipelineError::InvalidModel(format!(
            "horizon models come from different runs: seeds {} and {}",
            day1.seed(),
            dayn.seed()
        )));
    }
    if day1.grid_id() != dayn.grid_id() || day1.grid_id() != context.grid_id() {
        return Err(PipelineError::InvalidModel(format!(
            "grid mismatch: models for `{}`/`{}`, context for `{}`",
            day1.grid_id(),
            dayn.grid_id(),
            context.grid_id()
        )));
    }
    let schema = context.schema();
    let (day1_names, day1_groups) = feature_layout(schema, DayClass::Day1);
    let (dayn_names, dayn_groups) = feature_layout(schema, DayClass::DayN);
    if day1.raw_columns() != &day1_names[..] || dayn.raw_columns() != &dayn_names[..] {
        return Err(PipelineError::InvalidModel(
            "context table columns do not match the models' training features".to_string(),
        ));
    }

    // Weather coverage first: every variable, every horizon hour, finite.
    for hour in 0..HORIZON_HOURS {
        for var in schema.weather() {
            let ok = future_weather
                .get(var)
                .and_then(|values| values.get(hour))
                .is_some_and(|v| v.is_finite());
            if !ok {
                return Err(PipelineError::MissingWeather { hour });
            }
        }
    }

    // Trailing 24 h of groundtruth ending at origin - 1h.
    let mut ci_lags = Vec::with_capacity(HOURS_PER_DAY);
    let mut source_lags: BTreeMap<String, Vec<f64>> = schema
        .sources()
        .iter()
        .map(|s| (s.clone(), Vec::with_capacity(HOURS_PER_DAY)))
        .collect();
    for lag_hour in 0..HOURS_PER_DAY as i64 {
        let ts = origin - TimeDelta::hours(HOURS_PER_DAY as i64 - lag_hour);
        let idx = context.index_of(ts).ok_or_else(|| {
            PipelineError::MissingContext(format!("no context row at {}", stamp(ts)))
        })?;
        let record = &context.records()[idx];
        if !record.carbon_intensity.is_finite() {
            return Err(PipelineError::MissingContext(format!(
                "carbon intensity missing at {}",
                stamp(ts)
            )));
        }
        ci_lags.push(record.carbon_intensity);
        for (source, lags) in source_lags.iter_mut() {
            let v = record.source_mw.get(source).copied().unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(PipelineError::MissingContext(format!(
                    "source `{source}` missing at {}",
                    stamp(ts)
                )));
            }
            lags.push(v);
        }
    }

    let mut values = Vec::with_capacity(HORIZON_HOURS);

    // Day 1: groundtruth lags, per-hour models.
    let day_weather = weather_window(future_weather, schema.weather(), 0);
    for (hour, ensemble) in day1.hour_ensembles().iter().enumerate() {
        let inputs = RowInputs {
            ci_lags: &ci_lags,
            source_lags: &source_lags,
            target_ts: origin + TimeDelta::hours(hour as i64),
            weather: &day_weather,
        };
        let row = assemble_row(schema, DayClass::Day1, &inputs)?;
        let x = one_row_matrix(&day1_names, &day1_groups, row)?;
        values.push(ensemble.predict(&x)?[0]);
    }

    // Days 2-4: the recursive-day model re-applied, consuming the previous
    // day's 24 predictions as its carbon-intensity lags.
    let empty_sources = BTreeMap::new();
    let mut recursive_lags = values.clone();
    for day in 1..DAY_BOUNDARIES.len() {
        let day_weather = weather_window(future_weather, schema.weather(), day);
        let mut day_values = Vec::with_capacity(HOURS_PER_DAY);
        for (hour, ensemble) in dayn.hour_ensembles().iter().enumerate() {
            let inputs = RowInputs {
                ci_lags: &recursive_lags,
                source_lags: &empty_sources,
                target_ts: origin + TimeDelta::hours((HOURS_PER_DAY * day + hour) as i64),
                weather: &day_weather,
            };
            let row = assemble_row(schema, DayClass::DayN, &inputs)?;
            let x = one_row_matrix(&dayn_names, &dayn_groups, row)?;
            day_values.push(ensemble.predict(&x)?[0]);
        }
        values.extend_from_slice(&day_values);
        recursive_lags = day_values;
    }

    ForecastResult::new(origin, values, day1.seed())
}

/// [`forecast_96h`] with the weather block read from the table's own
/// recorded forecast columns.
pub fn forecast_from_table(
    day1: &HorizonModel,
    dayn: &HorizonModel,
    table: &TimeSeriesTable,
    origin: Timestamp,
) -> Result<ForecastResult, PipelineError> {
    let weather = weather_block_from_table(table, origin)?;
    forecast_96h(day1, dayn, table, &weather, origin)
}

/// All UTC midnights in `[start, end]`.
fn midnights_between(start: Timestamp, end: Timestamp) -> Vec<Timestamp> {
    let first = if is_midnight(start) {
        start
    } else {
        (start.date_naive() + chrono::Days::new(1))
            .and_time(NaiveTime::MIN)
            .and_utc()
    };
    let mut out = Vec::new();
    let mut ts = first;
    while ts <= end {
        out.push(ts);
        ts += TimeDelta::days(1);
    }
    out
}

/// Everything one experiment run produces: the pooled per-day error report
/// and the raw forecasts behind it, keyed by seed.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    /// Origin-ascending forecasts per seed; every seed covers the same
    /// origins.
    pub forecasts: BTreeMap<u64, Vec<ForecastResult>>,
}

/// Runs the full experiment with the sublearner pool and ensemble settings
/// taken from the config.
pub fn run_experiment(
    table: &TimeSeriesTable,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome, PipelineError> {
    let plan = config.ensemble_plan()?;
    run_experiment_with_plan(table, config, &plan)
}

/// [`run_experiment`] with an explicit training plan (for reduced-size test
/// and benchmark pools).
///
/// Per seed: train both horizon models on rows strictly before the cutoff,
/// forecast from every UTC midnight in the test period, and pool absolute
/// percentage errors per horizon day. Origins without full 96-hour
/// groundtruth coverage, or whose forecast lacks weather or context rows,
/// are skipped and counted; the skip set depends only on the data, never on
/// the seed.
pub fn run_experiment_with_plan(
    table: &TimeSeriesTable,
    config: &ExperimentConfig,
    plan: &EnsemblePlan,
) -> Result<ExperimentOutcome, PipelineError> {
    config.validate()?;
    let (train, _) = split_train_test(table, config.train_test_cutoff)?;
    evaluate_with(table, config.train_test_cutoff, &config.seeds, |seed| {
        train_horizon_models(&train, plan, seed)
    })
}

/// Rolls and scores forecasts for externally supplied horizon models, one
/// day-1/recursive-day pair per seed. The provider is called lazily so
/// callers can train in memory or load persisted bundles one seed at a
/// time.
pub fn evaluate_with(
    table: &TimeSeriesTable,
    cutoff: Timestamp,
    seeds: &[u64],
    mut models_for: impl FnMut(u64) -> Result<(HorizonModel, HorizonModel), PipelineError>,
) -> Result<ExperimentOutcome, PipelineError> {
    if seeds.is_empty() || seeds.iter().collect::<std::collections::BTreeSet<_>>().len() != seeds.len()
    {
        return Err(ConfigError::BadSeeds.into());
    }
    let (_, test) = split_train_test(table, cutoff)?;
    let horizon_tail = TimeDelta::hours(HORIZON_HOURS as i64 - 1);
    let mut origins = Vec::new();
    let mut origins_skipped = 0u64;
    for origin in midnights_between(test.first_timestamp(), test.last_timestamp()) {
        if table.index_of(origin + horizon_tail).is_none() {
            origins_skipped += 1;
        } else {
            origins.push(origin);
        }
    }

    let mut per_seed = BTreeMap::new();
    let mut forecasts_per_seed = BTreeMap::new();
    let mut counts: Option<(u64, u64, u64)> = None;
    for &seed in seeds {
        let (day1, dayn) = models_for(seed)?;
        let attempts: Vec<Option<ForecastResult>> = origins
            .par_iter()
            .map(|&origin| match forecast_from_table(&day1, &dayn, table, origin) {
                Ok(forecast) => Ok(Some(forecast)),
                Err(PipelineError::MissingWeather { .. })
                | Err(PipelineError::MissingContext(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_, PipelineError>>()?;
        let mut forecasts = Vec::with_capacity(attempts.len());
        let mut skipped = origins_skipped;
        for attempt in attempts {
            match attempt {
                Some(forecast) => forecasts.push(forecast),
                None => skipped += 1,
            }
        }
        if forecasts.is_empty() {
            return Err(PipelineError::MissingContext(
                "no test-period origin has full context, weather, and groundtruth coverage"
                    .to_string(),
            ));
        }
        let summary = per_day_mape(&forecasts, table)?;
        let seed_counts = (forecasts.len() as u64, skipped, summary.skipped_hours);
        match counts {
            None => counts = Some(seed_counts),
            // Skips depend only on the data, so differing counts mean a
            // broken invariant, not a data problem.
            Some(expected) if expected != seed_counts => {
                return Err(PipelineError::InvalidForecast(format!(
                    "origin coverage varied across seeds: {expected:?} vs {seed_counts:?}"
                )));
            }
            Some(_) => {}
        }
        per_seed.insert(seed, summary.day_mape);
        forecasts_per_seed.insert(seed, forecasts);
    }
    let (origins_evaluated, skipped, skipped_hours) =
        counts.expect("the seed list was checked nonempty above");
    let report = EvalReport::new(
        table.grid_id(),
        per_seed,
        skipped_hours,
        origins_evaluated,
        skipped,
    )?;
    Ok(ExperimentOutcome {
        report,
        forecasts: forecasts_per_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{HourlyRecord, TableSchema};
    use crate::ensemble::DEFAULT_SELECTION_ITERATIONS;
    use crate::sublearners::{
        GbdtModel, ModelParameters, SublearnerKind, SublearnerSpec, TrainedSublearner,
    };
    use chrono::{TimeZone, Utc};
    use std::f64::consts::{PI, TAU};
    use std::sync::OnceLock;

    const GRID: &str = "DEMO";

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    /// Deterministic table with one source and one weather variable: solar
    /// irradiance drives both generation and part of the carbon intensity.
    fn demo_table(n_hours: usize) -> TimeSeriesTable {
        let start = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
        let schema = TableSchema::new(vec!["solar"], vec!["forecast_dswrf"]);
        let records = (0..n_hours)
            .map(|i| {
                let t = i as f64;
                let hour_of_day = (i % 24) as f64;
                let dswrf = ((hour_of_day - 6.0) * PI / 12.0).sin().max(0.0) * 500.0;
                HourlyRecord {
                    timestamp: start + TimeDelta::hours(i as i64),
                    carbon_intensity: 300.0 + 50.0 * (t * TAU / 24.0).sin() + 0.1 * dswrf,
                    source_mw: [("solar".to_string(), 0.8 * dswrf)].into(),
                    weather: [("forecast_dswrf".to_string(), dswrf)].into(),
                }
            })
            .collect();
        TimeSeriesTable::new(GRID, schema, records).unwrap()
    }

    fn tiny_plan() -> EnsemblePlan {
        let spec = SublearnerSpec::new(SublearnerKind::GbdtA, 0)
            .with_hyperparameter("rounds", 8.0)
            .with_hyperparameter("max_depth", 2.0)
            .with_hyperparameter("early_stop_patience", 0.0);
        EnsemblePlan {
            base_specs: vec![spec.clone()],
            stack_specs: vec![spec],
            k_folds: 2,
            selection_iterations: 5,
            validation_fraction: 0.2,
        }
    }

    /// 70-day table plus both horizon models, trained once for the module.
    fn fixture() -> &'static (TimeSeriesTable, HorizonModel, HorizonModel) {
        static FIXTURE: OnceLock<(TimeSeriesTable, HorizonModel, HorizonModel)> = OnceLock::new();
        FIXTURE.get_or_init(|| {
            let table = demo_table(24 * 70);
            let (day1, dayn) = train_horizon_models(&table, &tiny_plan(), 5).unwrap();
            (table, day1, dayn)
        })
    }

    /// An hour ensemble that always predicts `c`, with the raw feature
    /// columns of the given schema and day class.
    fn constant_ensemble(
        schema: &TableSchema,
        day_class: DayClass,
        hour: usize,
        c: f64,
    ) -> StackedHourEnsemble {
        let (names, _) = feature_layout(schema, day_class);
        let stack = TrainedSublearner::from_parts(
            SublearnerSpec::new(SublearnerKind::GbdtA, 0),
            names,
            ModelParameters::Gbdt(GbdtModel {
                base_score: c,
                trees: vec![],
            }),
        );
        StackedHourEnsemble::from_parts(vec![], vec![], vec![stack], vec![1.0], hour, day_class)
            .unwrap()
    }

    fn constant_horizon(
        schema: &TableSchema,
        day_class: DayClass,
        c: f64,
        seed: u64,
    ) -> HorizonModel {
        let ensembles = (0..24)
            .map(|h| constant_ensemble(schema, day_class, h, c))
            .collect();
        HorizonModel::from_parts(
            ensembles,
            day_class,
            GRID.to_string(),
            (ts("2022-01-01T00:00:00Z"), ts("2022-03-11T23:00:00Z")),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn forecast_result_validates_shape_and_origin() {
        let origin = ts("2022-03-01T00:00:00Z");
        assert!(ForecastResult::new(origin, vec![1.0; 96], 0).is_ok());
        assert!(matches!(
            ForecastResult::new(ts("2022-03-01T05:00:00Z"), vec![1.0; 96], 0),
            Err(PipelineError::NotMidnight(_))
        ));
        assert!(matches!(
            ForecastResult::new(origin, vec![1.0; 95], 0),
            Err(PipelineError::InvalidForecast(_))
        ));
        let mut values = vec![1.0; 96];
        values[17] = f64::NAN;
        assert!(matches!(
            ForecastResult::new(origin, values, 0),
            Err(PipelineError::InvalidForecast(_))
        ));
    }

    #[test]
    fn forecast_csv_round_trip_is_bit_exact() {
        let mk = |origin: &str, seed: u64, scale: f64| {
            let values = (0..96)
                .map(|h| 200.0 + scale * (h as f64 + 1.0) / 3.0 + PI)
                .collect();
            ForecastResult::new(ts(origin), values, seed).unwrap()
        };
        let forecasts = vec![
            mk("2022-03-01T00:00:00Z", 3, 1.0),
            mk("2022-03-02T00:00:00Z", 3, 0.7),
        ];
        let mut bytes = Vec::new();
        write_forecast_csv(&forecasts, &mut bytes).unwrap();
        let parsed = read_forecast_csv(bytes.as_slice()).unwrap();
        assert_eq!(parsed, forecasts);
        let mut again = Vec::new();
        write_forecast_csv(&parsed, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    /// Rows for one block with an arbitrary hour sequence, for malformed
    /// inputs.
    fn csv_with_hours(hours: &[usize], seed_of: impl Fn(usize) -> u64) -> String {
        let origin = ts("2022-03-01T00:00:00Z");
        let mut out = String::from("datetime,predicted_ci,horizon_hour,seed\n");
        for &h in hours {
            let line_ts = origin + TimeDelta::hours(h as i64);
            out.push_str(&format!("{},100.5,{},{}\n", stamp(line_ts), h, seed_of(h)));
        }
        out
    }

    #[test]
    fn forecast_csv_rejects_malformed_inputs() {
        let full: Vec<usize> = (0..96).collect();
        assert!(read_forecast_csv(csv_with_hours(&full, |_| 1).as_bytes()).is_ok());

        let reject = |text: String, needle: &str| {
            let err = read_forecast_csv(text.as_bytes()).unwrap_err();
            match err {
                PipelineError::CsvSchema(msg) => {
                    assert!(msg.contains(needle), "`{msg}` missing `{needle}`")
                }
                other => panic!("expected CsvSchema, got {other:?}"),
            }
        };

        let valid = csv_with_hours(&full, |_| 1);
        reject(valid.replacen("predicted_ci", "ci", 1), "expected header");
        reject(csv_with_hours(&full[..95], |_| 1), "incomplete");
        reject(csv_with_hours(&full[1..], |_| 1), "start at horizon_hour 0");
        let skipped: Vec<usize> = (0..96).filter(|&h| h != 41).collect();
        reject(csv_with_hours(&skipped, |_| 1), "expected horizon_hour 41");
        reject(
            csv_with_hours(&full, |h| if h < 50 { 1 } else { 2 }),
            "seed changed",
        );
        reject(
            valid.replacen("2022-03-01T07:00:00Z", "2022-03-01T09:00:00Z", 1),
            "origin plus horizon_hour",
        );
        reject(
            csv_with_hours(&[96], |_| 1),
            "out of range",
        );
        reject(
            String::from("datetime,predicted_ci,horizon_hour,seed\n"),
            "no forecast rows",
        );
    }

    #[test]
    fn midnights_cover_the_closed_range() {
        let list = midnights_between(ts("2022-03-01T05:00:00Z"), ts("2022-03-04T23:00:00Z"));
        assert_eq!(
            list,
            vec![
                ts("2022-03-02T00:00:00Z"),
                ts("2022-03-03T00:00:00Z"),
                ts("2022-03-04T00:00:00Z"),
            ]
        );
        let from_midnight =
            midnights_between(ts("2022-03-01T00:00:00Z"), ts("2022-03-01T00:00:00Z"));
        assert_eq!(from_midnight, vec![ts("2022-03-01T00:00:00Z")]);
    }

    #[test]
    fn horizon_model_validates_its_parts() {
        let schema = TableSchema::new(vec!["solar"], vec!["forecast_dswrf"]);
        let window = (ts("2022-01-01T00:00:00Z"), ts("2022-03-01T00:00:00Z"));
        let good: Vec<StackedHourEnsemble> = (0..24)
            .map(|h| constant_ensemble(&schema, DayClass::Day1, h, 1.0))
            .collect();
        assert!(HorizonModel::from_parts(
            good.clone(),
            DayClass::Day1,
            GRID.to_string(),
            window,
            0
        )
        .is_ok());

        let reject = |ensembles: Vec<StackedHourEnsemble>, needle: &str| {
            let err =
                HorizonModel::from_parts(ensembles, DayClass::Day1, GRID.to_string(), window, 0)
                    .unwrap_err();
            match err {
                PipelineError::InvalidModel(msg) => {
                    assert!(msg.contains(needle), "`{msg}` missing `{needle}`")
                }
                other => panic!("expected InvalidModel, got {other:?}"),
            }
        };

        reject(good[..23].to_vec(), "24 hour ensembles");
        let mut swapped = good.clone();
        swapped.swap(3, 4);
        reject(swapped, "targets hour");
        let mut mixed = good.clone();
        mixed[7] = constant_ensemble(&schema, DayClass::DayN, 7, 1.0);
        reject(mixed, "day class");
        let mut odd_columns = good.clone();
        let other_schema = TableSchema::new(vec!["solar", "wind"], vec!["forecast_dswrf"]);
        odd_columns[5] = constant_ensemble(&other_schema, DayClass::Day1, 5, 1.0);
        reject(odd_columns, "feature columns");
    }

    #[test]
    fn training_produces_24_aligned_ensembles_per_horizon() {
        let (table, day1, dayn) = fixture();
        assert_eq!(day1.day_class(), DayClass::Day1);
        assert_eq!(dayn.day_class(), DayClass::DayN);
        for model in [day1, dayn] {
            assert_eq!(model.hour_ensembles().len(), 24);
            assert_eq!(model.grid_id(), GRID);
            assert_eq!(model.seed(), 5);
            assert_eq!(
                model.training_window(),
                (table.first_timestamp(), table.last_timestamp())
            );
            for (h, ensemble) in model.hour_ensembles().iter().enumerate() {
                assert_eq!(ensemble.target_hour(), h);
            }
            let (names, _) = feature_layout(table.schema(), model.day_class());
            assert_eq!(model.raw_columns(), &names[..]);
        }
        assert_ne!(day1.raw_columns(), dayn.raw_columns());
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let table = demo_table(24 * 62);
        let (day1_a, _) = train_horizon_models(&table, &tiny_plan(), 9).unwrap();
        let (day1_b, _) = train_horizon_models(&table, &tiny_plan(), 9).unwrap();
        assert_eq!(
            day1_a.to_json_string().unwrap(),
            day1_b.to_json_string().unwrap()
        );
        let (day1_c, _) = train_horizon_models(&table, &tiny_plan(), 10).unwrap();
        assert_ne!(
            day1_a.to_json_string().unwrap(),
            day1_c.to_json_string().unwrap()
        );
    }

    #[test]
    fn short_history_is_rejected() {
        let table = demo_table(24 * 10);
        assert!(matches!(
            train_horizon_models(&table, &tiny_plan(), 0),
            Err(PipelineError::InsufficientHistory {
                days: 10,
                needed: 60
            })
        ));
    }

    #[test]
    fn horizon_model_json_round_trips_and_checks_version() {
        let (_, day1, _) = fixture();
        let json = day1.to_json_string().unwrap();
        let back = HorizonModel::from_json_str(&json).unwrap();
        assert_eq!(json, back.to_json_string().unwrap());

        let tampered = json.replacen("\"format_version\":1", "\"format_version\":99", 1);
        let err = HorizonModel::from_json_str(&tampered).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("day1.json");
        day1.write_json(&path).unwrap();
        let from_disk = HorizonModel::read_json(&path).unwrap();
        assert_eq!(json, from_disk.to_json_string().unwrap());
    }

    #[test]
    fn forecast_spans_96_hours_and_is_deterministic() {
        let (table, day1, dayn) = fixture();
        let origin = table.last_timestamp() + TimeDelta::hours(1);
        assert!(is_midnight(origin));
        let weather = demo_weather_block();
        let a = forecast_96h(day1, dayn, table, &weather, origin).unwrap();
        assert_eq!(a.values.len(), 96);
        assert_eq!(a.origin, origin);
        assert_eq!(a.seed, 5);
        assert_eq!(a.day_boundaries(), [0, 24, 48, 72]);
        let b = forecast_96h(day1, dayn, table, &weather, origin).unwrap();
        assert_eq!(a, b);
    }

    /// The demo weather pattern for 96 future hours (it repeats daily).
    fn demo_weather_block() -> BTreeMap<String, Vec<f64>> {
        let values = (0..96)
            .map(|h| (((h % 24) as f64 - 6.0) * PI / 12.0).sin().max(0.0) * 500.0)
            .collect();
        [("forecast_dswrf".to_string(), values)].into()
    }

    #[test]
    fn first_day_ignores_the_recursive_model_and_vice_versa() {
        let (table, day1, dayn) = fixture();
        let origin = table.last_timestamp() + TimeDelta::hours(1);
        let weather = demo_weather_block();
        let baseline = forecast_96h(day1, dayn, table, &weather, origin).unwrap();

        // Swapping in a constant recursive-day model pins hours 24-95 to
        // the constant and leaves hours 0-23 bit-identical.
        let constant_dayn = constant_horizon(table.schema(), DayClass::DayN, 123.0, day1.seed());
        let swapped = forecast_96h(day1, &constant_dayn, table, &weather, origin).unwrap();
        assert_eq!(swapped.values[..24], baseline.values[..24]);
        assert!(swapped.values[24..].iter().all(|&v| v == 123.0));
    }

    #[test]
    fn recursion_consumes_the_previous_days_predictions() {
        let (table, _, dayn) = fixture();
        let origin = table.last_timestamp() + TimeDelta::hours(1);
        let weather = demo_weather_block();
        let low = constant_horizon(table.schema(), DayClass::Day1, 260.0, dayn.seed());
        let high = constant_horizon(table.schema(), DayClass::Day1, 340.0, dayn.seed());
        let from_low = forecast_96h(&low, dayn, table, &weather, origin).unwrap();
        let from_high = forecast_96h(&high, dayn, table, &weather, origin).unwrap();
        // Day-2 lags differ (260 vs 340), so day-2 predictions must differ,
        // and the difference keeps propagating.
        assert_ne!(from_low.values[24..48], from_high.values[24..48]);
        assert_ne!(from_low.values[48..96], from_high.values[48..96]);
    }

    #[test]
    fn future_groundtruth_is_never_read() {
        let plan = tiny_plan();
        let train = demo_table(24 * 62);
        let (day1, dayn) = train_horizon_models(&train, &plan, 3).unwrap();
        let extended = demo_table(24 * 66);
        let origin = train.last_timestamp() + TimeDelta::hours(1);
        let weather = weather_block_from_table(&extended, origin).unwrap();
        let baseline = forecast_96h(&day1, &dayn, &extended, &weather, origin).unwrap();

        // Poison every record at or after the origin except its weather.
        let poisoned_records: Vec<HourlyRecord> = extended
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.timestamp >= origin {
                    r.carbon_intensity = 9.9e9;
                    for v in r.source_mw.values_mut() {
                        *v = -9.9e9;
                    }
                }
                r
            })
            .collect();
        let poisoned =
            TimeSeriesTable::new(GRID, extended.schema().clone(), poisoned_records).unwrap();
        let from_poisoned = forecast_96h(&day1, &dayn, &poisoned, &weather, origin).unwrap();
        assert_eq!(baseline, from_poisoned);
    }

    #[test]
    fn forecast_rejects_bad_inputs() {
        let (table, day1, dayn) = fixture();
        let origin = table.last_timestamp() + TimeDelta::hours(1);
        let weather = demo_weather_block();

        assert!(matches!(
            forecast_96h(day1, dayn, table, &weather, origin + TimeDelta::hours(2)),
            Err(PipelineError::NotMidnight(_))
        ));
        assert!(matches!(
            forecast_96h(dayn, day1, table, &weather, origin),
            Err(PipelineError::InvalidModel(_))
        ));

        let other_seed = constant_horizon(table.schema(), DayClass::DayN, 1.0, day1.seed() + 1);
        assert!(matches!(
            forecast_96h(day1, &other_seed, table, &weather, origin),
            Err(PipelineError::InvalidModel(_))
        ));

        // Weather variable absent, then one hour non-finite.
        assert!(matches!(
            forecast_96h(day1, dayn, table, &BTreeMap::new(), origin),
            Err(PipelineError::MissingWeather { hour: 0 })
        ));
        let mut holed = weather.clone();
        holed.get_mut("forecast_dswrf").unwrap()[50] = f64::NAN;
        assert!(matches!(
            forecast_96h(day1, dayn, table, &holed, origin),
            Err(PipelineError::MissingWeather { hour: 50 })
        ));

        // Context cut short of the trailing 24 h window.
        let cut = TimeSeriesTable::new(
            GRID,
            table.schema().clone(),
            table.records()[table.records().len() - 10..].to_vec(),
        )
        .unwrap();
        assert!(matches!(
            forecast_96h(day1, dayn, &cut, &weather, origin),
            Err(PipelineError::MissingContext(_))
        ));

        // Context whose schema does not match the models' features.
        let extra_schema = TableSchema::new(vec!["solar", "wind"], vec!["forecast_dswrf"]);
        let extra_records: Vec<HourlyRecord> = table
            .records()
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.source_mw.insert("wind".to_string(), 1.0);
                r
            })
            .collect();
        let mismatched = TimeSeriesTable::new(GRID, extra_schema, extra_records).unwrap();
        let mismatched_weather = weather_block_from_table(&mismatched, origin);
        assert!(mismatched_weather.is_err() || {
            matches!(
                forecast_96h(day1, dayn, &mismatched, &weather, origin),
                Err(PipelineError::InvalidModel(_))
            )
        });
    }

    fn experiment_config(cutoff: &str, seeds: Vec<u64>) -> ExperimentConfig {
        let mut config = ExperimentConfig::example();
        config.grid_id = GRID.to_string();
        config.train_test_cutoff = ts(cutoff);
        config.seeds = seeds;
        config
    }

    #[test]
    fn experiment_counts_origins_and_reproduces_bitwise() {
        // 80-day table, cutoff at day 71: ten test midnights.
        let table = demo_table(24 * 80);
        let config = experiment_config("2022-03-12T00:00:00Z", vec![0, 1]);
        let plan = tiny_plan();
        let outcome = run_experiment_with_plan(&table, &config, &plan).unwrap();

        // Origins day 71..=77 have the full 96 h of groundtruth; the last
        // three midnights do not.
        assert_eq!(outcome.report.origins_evaluated, 7);
        assert_eq!(outcome.report.origins_skipped, 3);
        assert_eq!(outcome.report.skipped_hours, 0);
        assert_eq!(outcome.report.per_seed.len(), 2);
        assert_eq!(outcome.forecasts[&0].len(), 7);
        assert_eq!(outcome.forecasts[&0][0].origin, ts("2022-03-12T00:00:00Z"));
        for value in outcome.report.per_seed.values().flatten() {
            assert!(value.is_finite() && *value >= 0.0);
        }

        let again = run_experiment_with_plan(&table, &config, &plan).unwrap();
        assert_eq!(
            outcome.report.to_json_string().unwrap(),
            again.report.to_json_string().unwrap()
        );
        let csv_of = |forecasts: &[ForecastResult]| {
            let mut bytes = Vec::new();
            write_forecast_csv(forecasts, &mut bytes).unwrap();
            bytes
        };
        assert_eq!(csv_of(&outcome.forecasts[&1]), csv_of(&again.forecasts[&1]));
    }

    #[test]
    fn experiment_with_single_seed_has_mean_equal_to_row() {
        let table = demo_table(24 * 78);
        let config = experiment_config("2022-03-12T00:00:00Z", vec![7]);
        let outcome = run_experiment_with_plan(&table, &config, &tiny_plan()).unwrap();
        assert_eq!(outcome.report.mean, outcome.report.per_seed[&7]);
        assert_eq!(outcome.report.origins_evaluated, 5);
        assert_eq!(outcome.report.origins_skipped, 3);
    }

    #[test]
    fn experiment_rejects_bad_cutoff() {
        let table = demo_table(24 * 70);
        let config = experiment_config("2030-01-01T00:00:00Z", vec![0]);
        assert!(matches!(
            run_experiment_with_plan(&table, &config, &tiny_plan()),
            Err(PipelineError::Dataset(_))
        ));
    }

    #[test]
    fn default_plan_settings_match_config_defaults() {
        let plan = EnsemblePlan::standard();
        assert_eq!(plan.k_folds, 5);
        assert_eq!(plan.selection_iterations, DEFAULT_SELECTION_ITERATIONS);
        assert_eq!(plan.validation_fraction, 0.1);
    }
}
