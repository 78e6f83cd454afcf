use thiserror::Error;

/// Errors surfaced by the library. The CLI maps these onto exit codes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The parameters violate the hypotheses of the almost-prime theorem.
    #[error("m = {m} is outside the theorem regime: {reason}")]
    NotTheoremMode { m: u64, reason: String },

    /// A local density vanished, so the target is not represented p-adically.
    #[error("local obstruction at p = {p}")]
    Obstruction { p: u64 },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// A closed form was asked for a prime outside its domain.
    #[error("wrong dispatch: {0}")]
    Dispatch(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
