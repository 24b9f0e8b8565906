use thiserror::Error;

/// Errors produced by the model, fitting and file layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not a valid rotation (deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },

    #[error("invalid joint: {0}")]
    InvalidJoint(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("degenerate keypoints: {0}")]
    DegenerateKeypoints(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("every keypoint has zero confidence; the fit is unconstrained")]
    UnconstrainedFit,

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("sequence is empty")]
    EmptySequence,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::InvalidRotation { .. } => "invalid_rotation",
            Error::InvalidJoint(_) => "invalid_joint",
            Error::InvalidSkeleton(_) => "invalid_skeleton",
            Error::InvalidModel(_) => "invalid_model",
            Error::DegenerateModel(_) => "degenerate_model",
            Error::DegenerateKeypoints(_) => "degenerate_keypoints",
            Error::Input(_) => "input",
            Error::UnconstrainedFit => "unconstrained_fit",
            Error::Numeric(_) => "numeric",
            Error::EmptySequence => "empty_sequence",
            Error::Format(_) => "format",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
