use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input too short: need at least {required} samples, got {actual}")]
    InputTooShort { required: usize, actual: usize },

    #[error("rank-deficient least-squares problem (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("divergence at epoch {epoch}: training loss became non-finite")]
    Divergence { epoch: usize },

    #[error("filter divergence at step {step}: {reason}")]
    FilterDivergence { step: usize, reason: String },

    #[error("model explosion: {0}")]
    ModelExplosion(String),

    #[error("support error: density vanishes at quantile level {gamma}")]
    Support { gamma: f64 },

    #[error("record {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Wraps an error with the index of the training record that caused it.
    pub(crate) fn in_record(self, index: usize) -> Self {
        Error::Record {
            index,
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag, used by the CLI's error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::InputTooShort { .. } => "input_too_short",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::Divergence { .. } => "divergence",
            Error::FilterDivergence { .. } => "filter_divergence",
            Error::ModelExplosion(_) => "model_explosion",
            Error::Support { .. } => "support",
            Error::Record { source, .. } => source.kind(),
            Error::Serialization(_) => "serialization",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
