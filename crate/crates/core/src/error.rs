use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem label `{0}` appears on both tensor factors")]
    LabelCollision(String),

    #[error("duplicate subsystem label `{0}`")]
    DuplicateLabel(String),

    #[error("subsystem label `{0}` not present on the state")]
    UnknownLabel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Hilbert dimension {0} exceeds the supported maximum of 16")]
    TooLarge(usize),

    #[error("vector ({x}, {y}, {z}) is not a unit vector")]
    NotUnit { x: f64, y: f64, z: f64 },

    #[error("operator is not {0}")]
    KindViolation(&'static str),

    #[error("γ²+δ² ≠ 1 (γ = {gamma}, δ = {delta}, γ²+δ² = {})", gamma * gamma + delta * delta)]
    BeamSplitterNorm { gamma: f64, delta: f64 },

    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("keep set must be non-empty")]
    EmptyKeep,

    #[error("expected exactly {expected} subsystems, got {got}")]
    WrongLabelCount { expected: usize, got: usize },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("count table has zero total")]
    ZeroTotal,

    #[error("shots must be at least 1")]
    ZeroShots,

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Validation { line: Option<usize>, message: String },

    #[error("numerical invariant violated: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn validation(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Validation {
            line,
            message: message.into(),
        }
    }
}
