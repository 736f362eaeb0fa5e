use thiserror::Error;

/// Errors raised across the sensing pipeline.
///
/// `Config` variants are validation failures in user-provided input (scenario
/// files, CLI arguments, plan parameters); everything else is a runtime fault.
#[derive(Debug, Error)]
pub enum MassError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampling plan invalid: {0}")]
    Plan(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("brute-force coherence limited to N <= {cap}, got N = {n}")]
    CapExceeded { n: usize, cap: usize },

    #[error("band [{low_hz}, {high_hz}] Hz contains no DFT bin")]
    EmptyBand { low_hz: f64, high_hz: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MassError {
    /// Whether the error stems from invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            MassError::Config(_)
                | MassError::Plan(_)
                | MassError::Json(_)
                | MassError::EmptyBand { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, MassError>;
