//! Error type shared by every module of the crate.

/// Crate-wide error type.
///
/// Estimation-stage failures carry the pipeline stage name so callers (and
/// per-block reports) can distinguish a model mismatch from a usage error.
#[derive(Debug, thiserror::Error)]
pub enum AfmsError {
    /// A parameter record violates an admissibility invariant. The message
    /// names the violated invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A length/shape precondition does not hold (e.g. even block length
    /// where odd is required).
    #[error("invalid length: {0}")]
    InvalidLength(String),

    /// Not enough samples for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Argument outside the supported numerical envelope.
    #[error("out of envelope: {0}")]
    OutOfEnvelope(String),

    /// An operation that requires nonempty input received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A numerical inversion failed (e.g. ratio inversion minimum at the
    /// search boundary).
    #[error("inversion failed: {0}")]
    Inversion(String),

    /// A fit-pipeline stage failed; `stage` names the stage. This is a model
    /// mismatch between the data and the signal family, not a crash.
    #[error("stage '{stage}' failed: {detail}")]
    Stage { stage: String, detail: String },
}

impl AfmsError {
    /// Convenience constructor for pipeline stage failures.
    pub fn stage(stage: &str, detail: impl Into<String>) -> Self {
        AfmsError::Stage {
            stage: stage.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, AfmsError>;
