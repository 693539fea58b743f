//! Carbon-intensity forecasting with stacked sublearner ensembles.
//!
//! The crate is organized as a pipeline:
//!
//! * [`dataset`] loads and repairs hourly grid CSV files and provides
//!   chronological train/test splits.
//! * [`features`] turns an hourly table into supervised examples per
//!   forecast hour (lag windows, cyclic datetime encodings, weather blocks).
//! * [`sublearners`] is the pool of trainable regressors: two gradient
//!   boosted tree variants and a multilayer perceptron, all built in-crate
//!   so that training is deterministic down to the bit.
//! * [`ensemble`] stacks the sublearners in two stages and aggregates the
//!   stack outputs with greedy forward selection.
//! * [`pipeline`] trains the day-1 and day-2-4 horizon models (24 per-hour
//!   ensembles each) and rolls recursive 96-hour forecasts.
//! * [`evaluation`] computes MAPE, per-day pooled error, and grouped
//!   permutation feature importance.
//! * [`config`] is the experiment configuration consumed by the CLI and by
//!   [`pipeline::run_experiment`].
//! * [`synthetic`] generates a self-contained synthetic grid for fixtures,
//!   demos, and benchmarks.

pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod seeding;
pub mod sublearners;
pub mod synthetic;

/// Format version stamped into every persisted JSON artifact (models,
/// ensembles, manifests). Readers refuse files with a different version.
pub const FORMAT_VERSION: u32 = 1;
