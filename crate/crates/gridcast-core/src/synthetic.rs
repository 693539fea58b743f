//! Self-contained synthetic grid generator.
//!
//! Produces an hourly table whose carbon intensity is a known signal, a
//! daily sinusoid plus a day-of-week pattern plus an irradiance-driven
//! term, wrapped in multiplicative noise:
//!
//! ```text
//! clean(t) = 250 + 60*sin(2*pi*t/24) + weekly(dow) + 0.3*dswrf(t)
//! ci(t)    = clean(t) * (1 + noise_level * z_t),  z_t ~ N(0, 1)
//! ```
//!
//! `dswrf` is a daylight bell scaled by season and a per-day cloud factor.
//! The noise-free signal is returned alongside the table, so tests can
//! compute the irreducible error any forecaster must pay and compare a
//! pipeline against it. One weather variable is constant on purpose:
//! a feature group that carries no information and must score exactly zero
//! permutation importance.

use chrono::{Datelike, TimeDelta, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::dataset::{DatasetError, HourlyRecord, TableSchema, TimeSeriesTable, Timestamp};
use crate::seeding::derive_seed;

/// Additive day-of-week offsets, Monday first: weekdays high, weekend low.
const WEEKLY_OFFSETS: [f64; 7] = [12.0, 10.0, 8.0, 6.0, 4.0, -14.0, -18.0];

/// Peak clear-sky irradiance, W/m^2.
const DSWRF_PEAK: f64 = 800.0;

/// The constant weather variable's value (standard pressure, hPa).
pub const CONSTANT_WEATHER_VALUE: f64 = 1013.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub grid_id: String,
    pub start: Timestamp,
    pub n_hours: usize,
    /// Multiplicative noise scale; 0.05 means 5% relative noise.
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticParams {
    /// Two full years from 2020-01-01, 5% noise.
    pub fn two_years(seed: u64) -> Self {
        SyntheticParams {
            grid_id: "SYN".to_string(),
            start: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            n_hours: 24 * 731,
            noise_level: 0.05,
            seed,
        }
    }
}

/// A generated table plus the noise-free signal behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGrid {
    pub table: TimeSeriesTable,
    /// `clean_ci[i]` is the noise-free carbon intensity of row `i`: the
    /// prediction an oracle with perfect knowledge of the signal would
    /// make.
    pub clean_ci: Vec<f64>,
}

/// Clear-sky bell: zero outside 06:00-18:00, peaking at noon.
fn solar_elevation(hour_of_day: f64) -> f64 {
    ((hour_of_day - 6.0) * TAU / 24.0).sin().max(0.0)
}

/// Seasonal irradiance factor in [0.5, 1.0], peaking near midsummer.
fn seasonal_factor(ts: Timestamp) -> f64 {
    let day_of_year = ts.ordinal() as f64;
    0.75 + 0.25 * ((day_of_year - 80.0) * TAU / 365.25).sin()
}

pub fn generate(params: &SyntheticParams) -> Result<SyntheticGrid, DatasetError> {
    let mut cloud_rng = ChaCha20Rng::seed_from_u64(derive_seed(params.seed, &[0]));
    let mut noise_rng = ChaCha20Rng::seed_from_u64(derive_seed(params.seed, &[1]));
    let n_days = params.n_hours.div_ceil(24);
    let cloud_by_day: Vec<f64> = (0..n_days)
        .map(|_| cloud_rng.random_range(0.35..1.0))
        .collect();

    let schema = TableSchema::new(
        vec!["solar", "wind"],
        vec!["forecast_dswrf", "forecast_pressure"],
    );
    let mut records = Vec::with_capacity(params.n_hours);
    let mut clean_ci = Vec::with_capacity(params.n_hours);
    for i in 0..params.n_hours {
        let ts = params.start + TimeDelta::hours(i as i64);
        let t = i as f64;
        let hour_of_day = ts.hour() as f64;
        let dow = ts.weekday().num_days_from_monday() as usize;

        let dswrf =
            DSWRF_PEAK * solar_elevation(hour_of_day) * seasonal_factor(ts) * cloud_by_day[i / 24];
        let clean = 250.0 + 60.0 * (t * TAU / 24.0).sin() + WEEKLY_OFFSETS[dow] + 0.3 * dswrf;
        let z: f64 = StandardNormal.sample(&mut noise_rng);
        let ci = clean * (1.0 + params.noise_level * z);

        let solar = 0.9 * dswrf;
        let wind = 150.0 + 60.0 * (t * TAU / 48.0 + 0.7).sin() + 25.0 * (t * TAU / 11.0).sin();
        records.push(HourlyRecord {
            timestamp: ts,
            carbon_intensity: ci,
            source_mw: BTreeMap::from([("solar".to_string(), solar), ("wind".to_string(), wind)]),
            weather: BTreeMap::from([
                ("forecast_dswrf".to_string(), dswrf),
                ("forecast_pressure".to_string(), CONSTANT_WEATHER_VALUE),
            ]),
        });
        clean_ci.push(clean);
    }
    let table = TimeSeriesTable::new(params.grid_id.clone(), schema, records)?;
    Ok(SyntheticGrid { table, clean_ci })
}
