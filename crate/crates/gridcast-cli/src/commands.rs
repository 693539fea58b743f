//! Implementations of the gridcast subcommands.
//!
//! Commands only do I/O and orchestration; all modelling logic lives in
//! `gridcast-core`. Every artifact write goes through a rendered byte
//! buffer so a rerun over identical inputs produces identical files.

use std::fs;
use std::path::Path;

use chrono::SecondsFormat;
use ndarray::Axis;

use gridcast_core::config::ExperimentConfig;
use gridcast_core::dataset::{
    gap_report, read_grid_csv, repair_gaps, split_train_test, write_grid_csv, TimeSeriesTable,
    Timestamp,
};
use gridcast_core::evaluation::{permutation_importance, top_k_features, EvaluationError};
use gridcast_core::features::{build_day1_examples, FeatureMatrix};
use gridcast_core::pipeline::{
    evaluate_with, forecast_from_table, run_experiment, train_horizon_models, write_forecast_csv,
    ForecastResult, PipelineError,
};
use gridcast_core::synthetic::{self, SyntheticParams};

use crate::error::CliError;
use crate::manifest::{sha256_hex, Manifest};

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn stamp(ts: Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parse a config file, returning both the value and the raw bytes
/// (the bytes feed the manifest's config checksum).
fn read_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| CliError::Usage(format!("{}: not valid UTF-8: {e}", path.display())))?;
    let config = ExperimentConfig::from_json_str(&text)?;
    Ok((config, bytes))
}

/// Read a grid CSV and interpolate short gaps, returning the table and
/// the raw bytes for checksumming.
fn load_table(
    path: &Path,
    grid_id: &str,
    max_gap_hours: u32,
) -> Result<(TimeSeriesTable, Vec<u8>), CliError> {
    let bytes = read_bytes(path)?;
    let raw = read_grid_csv(&bytes[..], grid_id)?;
    let table = repair_gaps(&raw, max_gap_hours)?;
    Ok((table, bytes))
}

pub fn cmd_train(config_path: &Path) -> Result<(), CliError> {
    let (config, config_bytes) = read_config(config_path)?;
    let (table, data_bytes) = load_table(&config.data_path, &config.grid_id, config.max_gap_hours)?;
    let plan = config.ensemble_plan()?;
    let (train, _) = split_train_test(&table, config.train_test_cutoff)?;

    fs::create_dir_all(&config.output_dir).map_err(|e| CliError::io(&config.output_dir, e))?;
    let mut manifest = Manifest::new(&config.grid_id, &config, &config_bytes, &data_bytes);

    for &seed in &config.seeds {
        let (day1, dayn) = train_horizon_models(&train, &plan, seed)?;
        for model in [&day1, &dayn] {
            let mut json = model.to_json_string()?;
            json.push('\n');
            let file = manifest.push_model(model.day_class(), seed, &json);
            write_bytes(&config.output_dir.join(&file), json.as_bytes())?;
        }
        println!("seed {seed}: trained day-1 and recursive horizon models");
    }
    manifest.write(&config.output_dir)?;
    println!(
        "wrote {} model files and manifest.json to {}",
        manifest.models.len(),
        config.output_dir.display()
    );
    Ok(())
}

/// Resolve `--seed`: explicit value must exist in the manifest, otherwise
/// the smallest seed with a complete model pair.
fn resolve_seed(manifest: &Manifest, requested: Option<u64>) -> Result<u64, CliError> {
    let available = manifest.seeds();
    match requested {
        Some(seed) if available.contains(&seed) => Ok(seed),
        Some(seed) => Err(CliError::Usage(format!(
            "no model pair for seed {seed} in the manifest (available: {available:?})"
        ))),
        None => available.first().copied().ok_or_else(|| {
            CliError::Usage("manifest lists no complete day1/dayn model pair".to_string())
        }),
    }
}

pub fn cmd_forecast(
    models_dir: &Path,
    origin: Timestamp,
    context_csv: &Path,
    output: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let manifest = Manifest::load(models_dir)?;
    let seed = resolve_seed(&manifest, seed)?;
    let (day1, dayn) = manifest.load_pair(models_dir, seed)?;
    let (context, _) = load_table(context_csv, &manifest.grid_id, manifest.config.max_gap_hours)?;

    let forecast = forecast_from_table(&day1, &dayn, &context, origin)?;
    let mut buf = Vec::new();
    write_forecast_csv(std::slice::from_ref(&forecast), &mut buf)?;
    match output {
        Some(path) => {
            write_bytes(path, &buf)?;
            println!(
                "wrote 96-hour forecast from {} (seed {seed}) to {}",
                stamp(origin),
                path.display()
            );
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn write_forecast_files(
    dir: &Path,
    forecasts: &std::collections::BTreeMap<u64, Vec<ForecastResult>>,
) -> Result<(), CliError> {
    for (seed, runs) in forecasts {
        let mut buf = Vec::new();
        write_forecast_csv(runs, &mut buf)?;
        write_bytes(&dir.join(format!("forecasts_seed{seed}.csv")), &buf)?;
    }
    Ok(())
}

pub fn cmd_evaluate(config_path: &Path, models_dir: Option<&Path>) -> Result<(), CliError> {
    let (config, _) = read_config(config_path)?;
    let (table, data_bytes) = load_table(&config.data_path, &config.grid_id, config.max_gap_hours)?;

    let outcome = match models_dir {
        None => run_experiment(&table, &config)?,
        Some(dir) => {
            let manifest = Manifest::load(dir)?;
            if manifest.grid_id != config.grid_id {
                return Err(CliError::Usage(format!(
                    "model bundle was trained for grid `{}` but the config names grid `{}`",
                    manifest.grid_id, config.grid_id
                )));
            }
            if manifest.data_sha256 != sha256_hex(&data_bytes) {
                log::warn!(
                    "evaluation data differs from the data the bundle was trained on"
                );
            }
            evaluate_with(&table, config.train_test_cutoff, &config.seeds, |seed| {
                manifest
                    .load_pair(dir, seed)
                    .map_err(|e| PipelineError::InvalidModel(e.to_string()))
            })?
        }
    };

    fs::create_dir_all(&config.output_dir).map_err(|e| CliError::io(&config.output_dir, e))?;
    let mut report_json = outcome.report.to_json_string()?;
    report_json.push('\n');
    write_bytes(&config.output_dir.join("report.json"), report_json.as_bytes())?;
    let table_text = outcome.report.to_text_table();
    write_bytes(&config.output_dir.join("report.txt"), table_text.as_bytes())?;
    write_forecast_files(&config.output_dir, &outcome.forecasts)?;

    print!("{table_text}");
    println!("artifacts written to {}", config.output_dir.display());
    Ok(())
}

/// Pool the day-1 training examples of every target hour into one matrix,
/// dropping rows whose groundtruth is not a positive finite number. Returns
/// the matrix, targets, and per-hour row segments.
fn pooled_day1_examples(
    table: &TimeSeriesTable,
) -> Result<(FeatureMatrix, Vec<f64>, Vec<(usize, usize, usize)>), CliError> {
    let mut names = None;
    let mut groups = None;
    let mut blocks = Vec::new();
    let mut y = Vec::new();
    let mut segments = Vec::new();
    for hour in 0..24 {
        let (x, t) = build_day1_examples(table, hour).map_err(PipelineError::from)?;
        let keep: Vec<usize> = t
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite() && **v > 0.0)
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            continue;
        }
        let sub = x.select_rows(&keep);
        let start = y.len();
        y.extend(keep.iter().map(|&i| t.values[i]));
        segments.push((start, y.len(), hour));
        names.get_or_insert_with(|| sub.column_names().to_vec());
        groups.get_or_insert_with(|| {
            sub.column_names()
                .iter()
                .map(|n| (n.clone(), sub.group_of(n).expect("own column").to_string()))
                .collect()
        });
        blocks.push(sub);
    }
    if blocks.is_empty() {
        return Err(EvaluationError::Empty.into());
    }
    let views: Vec<_> = blocks.iter().map(|b| b.rows()).collect();
    let stacked = ndarray::concatenate(Axis(0), &views)
        .map_err(|e| CliError::Internal(format!("example blocks disagree in width: {e}")))?;
    let x = FeatureMatrix::new(names.expect("nonempty"), groups.expect("nonempty"), stacked)
        .map_err(PipelineError::from)?;
    Ok((x, y, segments))
}

pub fn cmd_importance(
    models_dir: &Path,
    data_path: &Path,
    repeats: u32,
    seed: Option<u64>,
    rng_seed: u64,
    output: &Path,
) -> Result<(), CliError> {
    let manifest = Manifest::load(models_dir)?;
    let seed = resolve_seed(&manifest, seed)?;
    let day1 = {
        let (day1, _) = manifest.load_pair(models_dir, seed)?;
        day1
    };
    let (table, _) = load_table(data_path, &manifest.grid_id, manifest.config.max_gap_hours)?;

    let (x, y, segments) = pooled_day1_examples(&table)?;
    if x.column_names() != day1.raw_columns() {
        return Err(CliError::Usage(format!(
            "data columns do not match the model's feature layout \
             (data yields {} columns, model expects {})",
            x.n_cols(),
            day1.raw_columns().len()
        )));
    }
    let ensembles = day1.hour_ensembles();
    let predict = |m: &FeatureMatrix| -> Result<Vec<f64>, EvaluationError> {
        let mut out = vec![0.0; m.n_rows()];
        for &(start, end, hour) in &segments {
            let indices: Vec<usize> = (start..end).collect();
            let sub = m.select_rows(&indices);
            let preds = ensembles[hour]
                .predict(&sub)
                .map_err(|e| EvaluationError::Prediction(e.to_string()))?;
            out[start..end].copy_from_slice(&preds);
        }
        Ok(out)
    };
    let report = permutation_importance(predict, &x, &y, None, repeats, rng_seed)?;

    let mut json = report.to_json_string()?;
    json.push('\n');
    write_bytes(output, json.as_bytes())?;
    print!("{}", report.to_text_table());
    println!("top groups by mean MAPE increase:");
    for (rank, (group, gain)) in top_k_features(&report, 3).into_iter().enumerate() {
        println!("  {}. {group} (+{gain:.4} pp)", rank + 1);
    }
    println!("report written to {}", output.display());
    Ok(())
}

fn finite_stats(values: impl Iterator<Item = f64>) -> (usize, usize, f64, f64, f64) {
    let (mut n, mut missing, mut nonpositive) = (0usize, 0usize, 0usize);
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for v in values {
        if !v.is_finite() {
            missing += 1;
            continue;
        }
        if v <= 0.0 {
            nonpositive += 1;
        }
        n += 1;
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let mean = if n > 0 { sum / n as f64 } else { f64::NAN };
    (missing, nonpositive, min, max, mean)
}

pub fn cmd_inspect_data(data_path: &Path, grid_id: &str, max_gap_hours: u32) -> Result<(), CliError> {
    let bytes = read_bytes(data_path)?;
    let raw = read_grid_csv(&bytes[..], grid_id)?;

    println!("grid: {}", raw.grid_id());
    println!(
        "rows: {} ({} .. {})",
        raw.len(),
        stamp(raw.first_timestamp()),
        stamp(raw.last_timestamp())
    );
    let list = |names: &[String]| {
        if names.is_empty() {
            "none".to_string()
        } else {
            names.join(", ")
        }
    };
    println!("sources: {}", list(raw.schema().sources()));
    println!("weather: {}", list(raw.schema().weather()));
    println!("ignored columns: {}", list(raw.ignored_columns()));

    let report = gap_report(&raw);
    if report.is_clean() {
        println!("gaps: none");
    } else {
        let missing: u32 = report.row_gaps.iter().map(|(_, n)| n).sum();
        println!(
            "row gaps: {} (total {} missing hours)",
            report.row_gaps.len(),
            missing
        );
        for (ts, n) in report.row_gaps.iter().take(5) {
            println!("  {} missing hour(s) after {}", n, stamp(*ts));
        }
        if report.row_gaps.len() > 5 {
            println!("  ... and {} more", report.row_gaps.len() - 5);
        }
        for (column, count) in &report.blank_cells {
            println!("blank cells in `{column}`: {count}");
        }
    }

    let (missing, nonpositive, min, max, mean) =
        finite_stats(raw.records().iter().map(|r| r.carbon_intensity));
    println!(
        "carbon intensity: min {min:.2} mean {mean:.2} max {max:.2}, \
         nonpositive {nonpositive}, missing {missing}"
    );

    match repair_gaps(&raw, max_gap_hours) {
        Ok(repaired) => println!(
            "repair with max gap {max_gap_hours}h: ok, {} rows, complete: {}",
            repaired.len(),
            repaired.is_complete()
        ),
        Err(e) => println!("repair with max gap {max_gap_hours}h: FAILS: {e}"),
    }
    Ok(())
}

pub fn cmd_print_config() -> Result<(), CliError> {
    println!("{}", ExperimentConfig::example().to_json_string()?);
    Ok(())
}

pub fn cmd_generate_data(
    output: &Path,
    seed: u64,
    hours: Option<usize>,
    noise: f64,
    grid_id: &str,
) -> Result<(), CliError> {
    let mut params = SyntheticParams::two_years(seed);
    params.grid_id = grid_id.to_string();
    params.noise_level = noise;
    if let Some(h) = hours {
        params.n_hours = h;
    }
    let grid = synthetic::generate(&params)?;
    let mut buf = Vec::new();
    write_grid_csv(&grid.table, &mut buf).map_err(|e| CliError::io(output, e))?;
    write_bytes(output, &buf)?;
    println!(
        "wrote {} synthetic hourly rows ({} .. {}) to {}",
        grid.table.len(),
        stamp(grid.table.first_timestamp()),
        stamp(grid.table.last_timestamp()),
        output.display()
    );
    Ok(())
}
