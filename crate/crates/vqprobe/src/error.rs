use thiserror::Error;

/// Error type shared across the crate.
///
/// Variants are grouped by where they surface: configuration and spec
/// parsing problems (bad user input), data problems (corrupt or
/// inconsistent stores), and numeric contract violations detected at
/// runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("corrupt store: {0}")]
    CorruptStore(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate vector: projected norm below 1e-12")]
    DegenerateVector,

    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    #[error("insufficient history: have {have} records, need {need}")]
    InsufficientHistory { have: usize, need: usize },

    #[error("unknown condition label: {0}")]
    UnknownCondition(String),

    #[error("training aborted: {0}")]
    TrainAbort(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for usage/config problems,
    /// 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Spec(_) | Error::Config(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
