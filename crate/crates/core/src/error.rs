use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate input: column {column} is numerically dependent on earlier columns")]
    DegenerateInput { column: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported shape {height}x{width}: dimensions must be powers of two")]
    UnsupportedShape { height: usize, width: usize },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("timestep {t} out of range 0..={max}")]
    Range { t: usize, max: usize },
    #[error("{stage} training diverged at epoch {epoch}")]
    TrainingDiverged { stage: String, epoch: usize },
    #[error("rank-deficient Jacobian: singular value {index} is {value:e}")]
    RankDeficient { index: usize, value: f64 },
    #[error("degenerate decoder: non-finite Jacobian column for latent dimension {dim}")]
    DegenerateDecoder { dim: usize },
    #[error("dimension mask keeps no coordinates")]
    EmptyMask,
    #[error("unsupported method `{0}`")]
    UnsupportedMethod(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("incomplete run: missing {}", .missing.join(", "))]
    IncompleteRun { missing: Vec<String> },
    #[error("stage `{stage}` failed (config {config_hash}): {source}")]
    Stage {
        stage: String,
        config_hash: String,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) | Error::UnsupportedMethod(_) | Error::Range { .. } | Error::Json(_) => 2,
            Error::Format { .. } | Error::Io { .. } | Error::Csv(_) => 3,
            Error::TrainingDiverged { .. } => 4,
            Error::IncompleteRun { .. } => 5,
            _ => 1,
        }
    }
}
