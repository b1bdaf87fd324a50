use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("schema error: {0}")]
    Schema(String),

    /// `row` is the 1-based data row (header excluded), `column` the 1-based
    /// position among the variable columns.
    #[error("parse error at ({row}, {column}): cannot read {value:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("calibration failed for row {row}: achieved entropy {entropy:.6} bits, target perplexity {perplexity}")]
    Calibration {
        row: usize,
        entropy: f64,
        perplexity: f64,
    },

    #[error("optimization diverged at iteration {iteration} (learning rate {learning_rate})")]
    Divergence { iteration: usize, learning_rate: f64 },

    #[error("item {0:?} has no label")]
    MissingLabel(String),

    #[error("stale cache {path}: {reason}")]
    StaleCache { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// An error raised inside a named pipeline stage.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad input or arguments rather than a
    /// failure while running the pipeline.
    pub fn is_usage(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_usage();
        }
        matches!(
            self,
            Error::EmptyInput(_)
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Dimension(_)
                | Error::MissingLabel(_)
        )
    }
}
