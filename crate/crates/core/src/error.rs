use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the simulation and analysis routines.
///
/// The variants are grouped by how a caller is expected to react: input
/// outside a formula's domain, bad configuration, a model used outside
/// its validity regime, or a numerical routine that gave up.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("capacity error: {requested} spins requested, at most {max} supported")]
    Capacity { requested: usize, max: usize },

    #[error("range error: requested t = {requested} us, trajectory covers {available} us")]
    Range { requested: f64, available: f64 },

    #[error("unsupported sequence kind {0:?} for this operation")]
    UnsupportedKind(crate::sequence::SequenceKind),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
