//! Hourly grid CSV ingestion, validation, gap repair, and splits.
//!
//! The expected file layout is one row per hour with a header:
//! a `datetime` column (ISO-8601, normalized to UTC), a `carbon_intensity`
//! column (gCO2e/kWh), optional source-generation columns drawn from
//! [`SOURCE_COLUMNS`], and optional weather-forecast columns prefixed with
//! `forecast_`. Unrecognized columns are ignored with a warning.
//!
//! Missing data comes in two shapes in the wild: absent rows and blank
//! cells. Both are represented internally as NaN cells on an hourly grid
//! and both are filled by [`repair_gaps`], which linearly interpolates runs
//! of up to `max_gap_hours` consecutive missing values per column.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeDelta, TimeZone, Timelike, Utc};
use thiserror::Error;

/// UTC instant with hourly resolution.
pub type Timestamp = DateTime<Utc>;

/// Source-generation column names the loader recognizes.
pub const SOURCE_COLUMNS: &[&str] = &[
    "biomass",
    "coal",
    "geothermal",
    "hydro",
    "nat_gas",
    "nuclear",
    "oil",
    "solar",
    "unknown",
    "wind",
];

/// Prefix identifying weather-forecast columns.
pub const WEATHER_PREFIX: &str = "forecast_";

/// Default maximum gap length (hours) that repair is willing to fill.
pub const DEFAULT_MAX_GAP_HOURS: u32 = 6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: unparseable or non-hour-aligned timestamp `{value}`")]
    UnparseableTimestamp { row: usize, value: String },
    #[error("row {row}, column `{column}`: unparseable value `{value}`")]
    UnparseableValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: negative value {value}")]
    NegativeValue {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(Timestamp),
    #[error("row {row}: timestamp {ts} is earlier than the previous row")]
    NonChronological { row: usize, ts: Timestamp },
    #[error("no data rows")]
    Empty,
    #[error(
        "gap of {length} missing hour(s) in `{column}` starting at {start} \
         exceeds the maximum of {max}"
    )]
    GapTooLarge {
        column: String,
        start: Timestamp,
        length: u32,
        max: u32,
    },
    #[error("cutoff {0} must lie strictly inside the table's time range")]
    CutoffOutOfRange(Timestamp),
    #[error("records do not match the table schema: {0}")]
    SchemaMismatch(String),
}

/// The set of source and weather columns present in a table.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TableSchema {
    sources: Vec<String>,
    weather: Vec<String>,
}

impl TableSchema {
    /// Builds a schema; names are sorted and deduplicated.
    pub fn new<S: Into<String>>(
        sources: impl IntoIterator<Item = S>,
        weather: impl IntoIterator<Item = S>,
    ) -> Self {
        let mut sources: Vec<String> = sources.into_iter().map(Into::into).collect();
        let mut weather: Vec<String> = weather.into_iter().map(Into::into).collect();
        sources.sort();
        sources.dedup();
        weather.sort();
        weather.dedup();
        TableSchema { sources, weather }
    }

    pub fn empty() -> Self {
        TableSchema::new(Vec::<String>::new(), Vec::<String>::new())
    }

    /// Source column names, sorted.
    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Weather column names (with their `forecast_` prefix), sorted.
    pub fn weather(&self) -> &[String] {
        &self.weather
    }
}

/// One hour of grid data. A NaN value marks a cell that was missing in the
/// input and has not been repaired yet; [`repair_gaps`] removes all NaNs.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub timestamp: Timestamp,
    pub carbon_intensity: f64,
    pub source_mw: BTreeMap<String, f64>,
    pub weather: BTreeMap<String, f64>,
}

/// Chronologically ordered hourly records sharing one schema.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    grid_id: String,
    schema: TableSchema,
    records: Vec<HourlyRecord>,
    ignored_columns: Vec<String>,
}

impl TimeSeriesTable {
    /// Validating constructor: timestamps must be strictly increasing and
    /// hour-aligned, and every record must carry exactly the schema's keys.
    pub fn new(
        grid_id: impl Into<String>,
        schema: TableSchema,
        records: Vec<HourlyRecord>,
    ) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::Empty);
        }
        for (i, rec) in records.iter().enumerate() {
            if !is_hour_aligned(rec.timestamp) {
                return Err(DatasetError::UnparseableTimestamp {
                    row: i + 1,
                    value: rec.timestamp.to_rfc3339(),
                });
            }
            if i > 0 {
                let prev = records[i - 1].timestamp;
                if rec.timestamp == prev {
                    return Err(DatasetError::DuplicateTimestamp(rec.timestamp));
                }
                if rec.timestamp < prev {
                    return Err(DatasetError::NonChronological {
                        row: i + 1,
                        ts: rec.timestamp,
                    });
                }
            }
            let src_keys: Vec<&String> = rec.source_mw.keys().collect();
            let schema_src: Vec<&String> = schema.sources.iter().collect();
            if src_keys != schema_src {
                return Err(DatasetError::SchemaMismatch(format!(
                    "record {} source columns {:?} != schema {:?}",
                    i + 1,
                    src_keys,
                    schema_src
                )));
            }
            let w_keys: Vec<&String> = rec.weather.keys().collect();
            let schema_w: Vec<&String> = schema.weather.iter().collect();
            if w_keys != schema_w {
                return Err(DatasetError::SchemaMismatch(format!(
                    "record {} weather columns {:?} != schema {:?}",
                    i + 1,
                    w_keys,
                    schema_w
                )));
            }
        }
        Ok(TimeSeriesTable {
            grid_id: grid_id.into(),
            schema,
            records,
            ignored_columns: Vec::new(),
        })
    }

    pub fn grid_id(&self) -> &str {
        &self.grid_id
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn records(&self) -> &[HourlyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Columns present in the file but not part of the recognized schema.
    pub fn ignored_columns(&self) -> &[String] {
        &self.ignored_columns
    }

    pub fn first_timestamp(&self) -> Timestamp {
        self.records[0].timestamp
    }

    pub fn last_timestamp(&self) -> Timestamp {
        self.records[self.records.len() - 1].timestamp
    }

    /// True when timestamps form an arithmetic sequence with step 3600 s.
    pub fn is_uniform_hourly(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].timestamp - w[0].timestamp == TimeDelta::hours(1))
    }

    /// True when no cell is NaN.
    pub fn is_complete(&self) -> bool {
        self.records.iter().all(|r| {
            r.carbon_intensity.is_finite()
                && r.source_mw.values().all(|v| v.is_finite())
                && r.weather.values().all(|v| v.is_finite())
        })
    }

    /// Index of the record at `ts`, if the table were dense from its first
    /// timestamp. Returns None when `ts` is outside the table or the table
    /// has gaps at or before `ts`.
    pub fn index_of(&self, ts: Timestamp) -> Option<usize> {
        if ts < self.first_timestamp() || ts > self.last_timestamp() {
            return None;
        }
        let offset = (ts - self.first_timestamp()).num_hours() as usize;
        // Valid without a search only on a uniform table; fall back otherwise.
        if offset < self.records.len() && self.records[offset].timestamp == ts {
            return Some(offset);
        }
        self.records
            .binary_search_by_key(&ts, |r| r.timestamp)
            .ok()
    }
}

fn is_hour_aligned(ts: Timestamp) -> bool {
    ts.minute() == 0 && ts.second() == 0 && ts.nanosecond() == 0
}

/// Parses the timestamp formats seen in grid exports, normalizing to UTC.
/// Naive timestamps (no offset) are taken as UTC.
fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M:%S%z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some(dt.with_timezone(&Utc));
        }
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
    ] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&n));
        }
    }
    None
}

/// Loads a grid CSV from disk. See [`read_grid_csv`].
pub fn load_grid_csv(path: &Path, grid_id: &str) -> Result<TimeSeriesTable, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_grid_csv(file, grid_id)
}

/// Parses hourly grid data from any reader.
///
/// Blank cells are kept as NaN (missing, awaiting [`repair_gaps`]); negative
/// carbon intensity or source generation is rejected. Rows arrive in file
/// order and must be strictly chronological after UTC normalization.
pub fn read_grid_csv<R: Read>(reader: R, grid_id: &str) -> Result<TimeSeriesTable, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let mut datetime_idx = None;
    let mut ci_idx = None;
    // (column index, name)
    let mut source_cols: Vec<(usize, String)> = Vec::new();
    let mut weather_cols: Vec<(usize, String)> = Vec::new();
    let mut ignored: Vec<String> = Vec::new();

    for (i, name) in headers.iter().enumerate() {
        let name = name.trim();
        match name {
            "datetime" => datetime_idx = Some(i),
            "carbon_intensity" => ci_idx = Some(i),
            _ if SOURCE_COLUMNS.contains(&name) => source_cols.push((i, name.to_string())),
            _ if name.starts_with(WEATHER_PREFIX) => weather_cols.push((i, name.to_string())),
            _ => ignored.push(name.to_string()),
        }
    }
    let datetime_idx = datetime_idx.ok_or_else(|| DatasetError::MissingColumn("datetime".into()))?;
    let ci_idx = ci_idx.ok_or_else(|| DatasetError::MissingColumn("carbon_intensity".into()))?;
    if !ignored.is_empty() {
        log::warn!(
            "{}: ignoring unrecognized column(s): {}",
            grid_id,
            ignored.join(", ")
        );
    }

    let schema = TableSchema::new(
        source_cols.iter().map(|(_, n)| n.clone()),
        weather_cols.iter().map(|(_, n)| n.clone()),
    );

    let mut records: Vec<HourlyRecord> = Vec::new();
    for (row_idx, result) in rdr.records().enumerate() {
        let row = row_idx + 1; // 1-based data rows
        let record = result?;

        let raw_ts = record.get(datetime_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts)
            .filter(|t| is_hour_aligned(*t))
            .ok_or_else(|| DatasetError::UnparseableTimestamp {
                row,
                value: raw_ts.to_string(),
            })?;
        if let Some(prev) = records.last() {
            if ts == prev.timestamp {
                return Err(DatasetError::DuplicateTimestamp(ts));
            }
            if ts < prev.timestamp {
                return Err(DatasetError::NonChronological { row, ts });
            }
        }

        let parse_cell = |idx: usize, column: &str, nonneg: bool| -> Result<f64, DatasetError> {
            let raw = record.get(idx).unwrap_or("").trim();
            if raw.is_empty() {
                return Ok(f64::NAN); // missing, awaiting repair
            }
            let value: f64 = raw.parse().map_err(|_| DatasetError::UnparseableValue {
                row,
                column: column.to_string(),
                value: raw.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::UnparseableValue {
                    row,
                    column: column.to_string(),
                    value: raw.to_string(),
                });
            }
            if nonneg && value < 0.0 {
                return Err(DatasetError::NegativeValue {
                    row,
                    column: column.to_string(),
                    value,
                });
            }
            Ok(value)
        };

        let carbon_intensity = parse_cell(ci_idx, "carbon_intensity", true)?;
        let mut source_mw = BTreeMap::new();
        for (idx, name) in &source_cols {
            source_mw.insert(name.clone(), parse_cell(*idx, name, true)?);
        }
        let mut weather = BTreeMap::new();
        for (idx, name) in &weather_cols {
            weather.insert(name.clone(), parse_cell(*idx, name, false)?);
        }

        records.push(HourlyRecord {
            timestamp: ts,
            carbon_intensity,
            source_mw,
            weather,
        });
    }

    let mut table = TimeSeriesTable::new(grid_id, schema, records)?;
    table.ignored_columns = ignored;
    Ok(table)
}

/// Writes a table back to the CSV layout accepted by [`read_grid_csv`].
/// NaN cells are written blank, so unrepaired tables round-trip.
pub fn write_grid_csv<W: Write>(table: &TimeSeriesTable, writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["datetime".to_string(), "carbon_intensity".to_string()];
    header.extend(table.schema.sources.iter().cloned());
    header.extend(table.schema.weather.iter().cloned());
    w.write_record(&header)?;

    let fmt = |v: f64| {
        if v.is_finite() {
            format!("{v}")
        } else {
            String::new()
        }
    };
    for rec in &table.records {
        let mut row = vec![
            rec.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            fmt(rec.carbon_intensity),
        ];
        for s in &table.schema.sources {
            row.push(fmt(rec.source_mw[s]));
        }
        for wname in &table.schema.weather {
            row.push(fmt(rec.weather[wname]));
        }
        w.write_record(&row)?;
    }
    w.flush()
}

/// Column accessor used by repair: CI, then sources, then weather.
fn column_names(schema: &TableSchema) -> Vec<String> {
    let mut cols = vec!["carbon_intensity".to_string()];
    cols.extend(schema.sources.iter().cloned());
    cols.extend(schema.weather.iter().cloned());
    cols
}

fn get_column(rec: &HourlyRecord, name: &str) -> f64 {
    if name == "carbon_intensity" {
        rec.carbon_intensity
    } else if let Some(v) = rec.source_mw.get(name) {
        *v
    } else {
        rec.weather[name]
    }
}

/// Fills gaps of up to `max_gap_hours` consecutive missing values per column
/// by linear interpolation between the bounding records, inserting absent
/// rows as needed; the result has uniform hourly spacing and no NaNs.
///
/// Longer runs, and runs touching the first or last hour (which have no
/// bounding value on one side), abort with [`DatasetError::GapTooLarge`].
/// Idempotent: repairing a repaired table returns it unchanged.
pub fn repair_gaps(
    table: &TimeSeriesTable,
    max_gap_hours: u32,
) -> Result<TimeSeriesTable, DatasetError> {
    let first = table.first_timestamp();
    let last = table.last_timestamp();
    let n_hours = (last - first).num_hours() as usize + 1;

    // Map each present record onto the dense hourly grid.
    let mut slot: Vec<Option<&HourlyRecord>> = vec![None; n_hours];
    for rec in &table.records {
        let idx = (rec.timestamp - first).num_hours() as usize;
        slot[idx] = Some(rec);
    }

    let cols = column_names(&table.schema);
    let mut filled: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for col in &cols {
        let mut values: Vec<f64> = slot
            .iter()
            .map(|s| s.map_or(f64::NAN, |r| get_column(r, col)))
            .collect();

        let mut i = 0;
        while i < n_hours {
            if values[i].is_nan() {
                let run_start = i;
                while i < n_hours && values[i].is_nan() {
                    i += 1;
                }
                let run_len = (i - run_start) as u32;
                let start_ts = first + TimeDelta::hours(run_start as i64);
                if run_len > max_gap_hours || run_start == 0 || i == n_hours {
                    return Err(DatasetError::GapTooLarge {
                        column: col.clone(),
                        start: start_ts,
                        length: run_len,
                        max: max_gap_hours,
                    });
                }
                let left = values[run_start - 1];
                let right = values[i];
                let span = (run_len + 1) as f64;
                for (k, v) in values[run_start..i].iter_mut().enumerate() {
                    *v = left + (right - left) * ((k + 1) as f64 / span);
                }
            } else {
                i += 1;
            }
        }
        filled.push(values);
    }

    let records: Vec<HourlyRecord> = (0..n_hours)
        .map(|i| {
            let mut iter = cols.iter().zip(filled.iter());
            let (_, ci_col) = iter.next().expect("carbon_intensity column");
            let mut source_mw = BTreeMap::new();
            let mut weather = BTreeMap::new();
            for (name, values) in iter {
                if table.schema.sources.contains(name) {
                    source_mw.insert(name.clone(), values[i]);
                } else {
                    weather.insert(name.clone(), values[i]);
                }
            }
            HourlyRecord {
                timestamp: first + TimeDelta::hours(i as i64),
                carbon_intensity: ci_col[i],
                source_mw,
                weather,
            }
        })
        .collect();

    let mut repaired = TimeSeriesTable::new(table.grid_id.clone(), table.schema.clone(), records)?;
    repaired.ignored_columns = table.ignored_columns.clone();
    Ok(repaired)
}

/// Splits a table at `cutoff`: records strictly before it form the first
/// output, the rest the second. Both halves share schema and order; the
/// cutoff must leave both halves nonempty.
pub fn split_train_test(
    table: &TimeSeriesTable,
    cutoff: Timestamp,
) -> Result<(TimeSeriesTable, TimeSeriesTable), DatasetError> {
    if cutoff <= table.first_timestamp() || cutoff > table.last_timestamp() {
        return Err(DatasetError::CutoffOutOfRange(cutoff));
    }
    let split_at = table
        .records
        .partition_point(|r| r.timestamp < cutoff);
    let train = TimeSeriesTable::new(
        table.grid_id.clone(),
        table.schema.clone(),
        table.records[..split_at].to_vec(),
    )?;
    let test = TimeSeriesTable::new(
        table.grid_id.clone(),
        table.schema.clone(),
        table.records[split_at..].to_vec(),
    )?;
    Ok((train, test))
}

/// Summary of missing data in an unrepaired table, for `inspect-data`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GapReport {
    /// Runs of entirely absent rows: (first missing hour, run length).
    pub row_gaps: Vec<(Timestamp, u32)>,
    /// Count of blank cells per column among the rows that are present.
    pub blank_cells: BTreeMap<String, usize>,
}

impl GapReport {
    pub fn is_clean(&self) -> bool {
        self.row_gaps.is_empty() && self.blank_cells.values().all(|&c| c == 0)
    }
}

/// Scans a table for absent rows and blank cells without modifying it.
pub fn gap_report(table: &TimeSeriesTable) -> GapReport {
    let mut row_gaps = Vec::new();
    for w in table.records.windows(2) {
        let jump = (w[1].timestamp - w[0].timestamp).num_hours();
        if jump > 1 {
            row_gaps.push((w[0].timestamp + TimeDelta::hours(1), (jump - 1) as u32));
        }
    }
    let mut blank_cells: BTreeMap<String, usize> = BTreeMap::new();
    for col in column_names(&table.schema) {
        let count = table
            .records
            .iter()
            .filter(|r| get_column(r, &col).is_nan())
            .count();
        blank_cells.insert(col, count);
    }
    GapReport {
        row_gaps,
        blank_cells,
    }
}
