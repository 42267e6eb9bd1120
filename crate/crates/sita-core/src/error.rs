use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum SitaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate embedding: norm below 1e-9")]
    DegenerateEmbedding,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("tone-unsafe perturbation: pitch shift rejected under tone_safe")]
    ToneUnsafePerturbation,

    #[error("anchor unusable for speaker loss: no opposite-gender positive for {0}")]
    NoCrossGenderPositive(String),

    #[error("no tone positives for anchor {0}")]
    NoTonePositives(String),

    #[error("unknown token id: {0}")]
    UnknownToken(String),

    #[error("malformed log-posterior row {row}: log-sum-exp = {lse}")]
    MalformedPosteriorRow { row: usize, lse: f64 },

    #[error("infeasible CTC target: expanded length {expanded} exceeds {frames} frames")]
    InfeasibleTarget { expanded: usize, frames: usize },

    #[error("missing prerequisite artifact: {0}")]
    MissingArtifact(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("{0}")]
    Other(String),
}

impl SitaError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SitaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SitaError>;
