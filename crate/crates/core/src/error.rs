use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A theory constant violates one of its invariants.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A function was evaluated outside its natural domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A monotone root search could not bracket a sign change.
    #[error("no root: {0}")]
    NoRoot(String),

    /// Conditioning on an event with no support.
    #[error("empty conditioning event: {0}")]
    EmptyConditioning(String),

    /// The requested synthetic world cannot satisfy its constraints.
    #[error("infeasible world: {0}")]
    InfeasibleWorld(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn domain(reason: impl Into<String>) -> Self {
        Error::Domain(reason.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
