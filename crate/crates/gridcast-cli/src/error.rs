//! CLI error type and its mapping onto process exit codes.
//!
//! Exit codes: 0 success, 2 user or configuration error, 3 data error,
//! 4 internal invariant failure. The mapping walks the error variants:
//! anything the user typed or pointed at wrongly is 2, anything wrong
//! inside an otherwise readable dataset is 3, and anything that indicates
//! a bug in this program is 4.

use gridcast_core::config::ConfigError;
use gridcast_core::dataset::DatasetError;
use gridcast_core::ensemble::EnsembleError;
use gridcast_core::evaluation::EvaluationError;
use gridcast_core::pipeline::PipelineError;
use gridcast_core::sublearners::SublearnerError;
use thiserror::Error;

pub const EXIT_USER: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("internal invariant failure: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Json { .. } => EXIT_USER,
            CliError::Internal(_) => EXIT_INTERNAL,
            CliError::Config(_) => EXIT_USER,
            CliError::Dataset(e) => dataset_code(e),
            CliError::Evaluation(e) => evaluation_code(e),
            CliError::Pipeline(e) => pipeline_code(e),
        }
    }
}

fn dataset_code(e: &DatasetError) -> i32 {
    match e {
        // A wrong path or cutoff is the user's mistake; everything else is
        // a problem inside the file itself.
        DatasetError::Io { .. } | DatasetError::CutoffOutOfRange(_) => EXIT_USER,
        _ => EXIT_DATA,
    }
}

fn evaluation_code(e: &EvaluationError) -> i32 {
    match e {
        EvaluationError::UnknownGroup(_) | EvaluationError::ZeroRepeats => EXIT_USER,
        EvaluationError::Json(_) => EXIT_USER,
        EvaluationError::ReportInvariant(_) | EvaluationError::NoSeeds => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

fn sublearner_code(e: &SublearnerError) -> i32 {
    match e {
        SublearnerError::BadHyperparameter { .. }
        | SublearnerError::UnknownHyperparameter { .. }
        | SublearnerError::WrongKind { .. }
        | SublearnerError::VersionMismatch { .. }
        | SublearnerError::InvalidModel(_)
        | SublearnerError::Json(_)
        | SublearnerError::Io { .. } => EXIT_USER,
        _ => EXIT_DATA,
    }
}

fn ensemble_code(e: &EnsembleError) -> i32 {
    match e {
        EnsembleError::BadFoldCount { .. }
        | EnsembleError::ZeroIterations
        | EnsembleError::BadPlan(_)
        | EnsembleError::InvalidModel(_)
        | EnsembleError::VersionMismatch { .. }
        | EnsembleError::Json(_)
        | EnsembleError::Io { .. } => EXIT_USER,
        EnsembleError::Sublearner(s) => sublearner_code(s),
        EnsembleError::Metric(m) => evaluation_code(m),
        _ => EXIT_DATA,
    }
}

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::Config(_)
        | PipelineError::VersionMismatch { .. }
        | PipelineError::NotMidnight(_)
        | PipelineError::InvalidModel(_)
        | PipelineError::Json(_)
        | PipelineError::Io { .. }
        | PipelineError::StreamIo(_) => EXIT_USER,
        PipelineError::InvalidForecast(_) => EXIT_DATA,
        PipelineError::Dataset(d) => dataset_code(d),
        PipelineError::Evaluation(ev) => evaluation_code(ev),
        PipelineError::Ensemble(en) => ensemble_code(en),
        _ => EXIT_DATA,
    }
}
