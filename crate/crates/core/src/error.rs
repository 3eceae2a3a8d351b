use thiserror::Error;

/// Errors raised across the simulator, estimators and pipelines.
#[derive(Debug, Error)]
pub enum OmxError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shift of {shift} exceeds the grid budget of {budget}")]
    ShiftOutOfRange { shift: f64, budget: f64 },
    #[error("insensitive configuration: derivative field vanishes")]
    InsensitiveConfiguration,
    #[error("no autocorrelation peak: intensity is flat")]
    NoAutocorrelationPeak,
    #[error("direction ill-defined: eigenvalue ratio {0:.3} below 1.2")]
    DirectionIllDefined(f64),
    #[error("noiseless SNR undefined: noise variance is zero")]
    NoiselessSnr,
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {path}; run first: omx {command}")]
    MissingArtifact { path: String, command: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl OmxError {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical degeneracy, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            OmxError::Config(_)
            | OmxError::InvalidParameter(_)
            | OmxError::DimensionMismatch(_)
            | OmxError::MissingArtifact { .. }
            | OmxError::Json(_) => 2,
            OmxError::ShiftOutOfRange { .. }
            | OmxError::InsensitiveConfiguration
            | OmxError::NoAutocorrelationPeak
            | OmxError::DirectionIllDefined(_)
            | OmxError::NoiselessSnr
            | OmxError::Degenerate(_) => 3,
            OmxError::Format(_) | OmxError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, OmxError>;
