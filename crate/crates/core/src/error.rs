use thiserror::Error;

/// Errors raised by the simulation and closed-form layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its valid domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// A 1-based index is outside `1..=len`.
    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    /// The desired-signal gain of a user vanished (zero Rake output).
    #[error("user {user} has a degenerate channel (h_sp = {h_sp:e})")]
    DegenerateChannel { user: usize, h_sp: f64 },

    /// The target-SINR equation had no sign change in its bracket.
    #[error("target SINR solver failed for si_ratio = {si_ratio:e}: {detail}")]
    Solver { si_ratio: f64, detail: String },

    /// A large-system prediction has a non-positive feasibility margin.
    #[error("infeasible prediction: margin N - g*[(K-1)mu + nu] = {margin:e}")]
    Infeasible { margin: f64 },

    /// A requested loss cannot be met by any finger fraction in the search range.
    #[error("target loss {target_db} dB outside achievable range [{min_db}, {max_db}] dB")]
    LossRange { target_db: f64, min_db: f64, max_db: f64 },

    #[error("csv output: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
