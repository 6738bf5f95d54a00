use thiserror::Error;

use crate::rational::Rational;

/// Errors raised by measure construction and the operations on the
/// representable class.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A set or function endpoint does not fall on a breakpoint of the
    /// measure's cell partition.
    #[error("set is not aligned with the cell partition at {0}")]
    Alignment(Rational),
    /// A point, breakpoint or piece lies outside the space it was given for.
    #[error("domain error: {0}")]
    Domain(String),
    /// Two objects that must live on the same space do not.
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    /// A structural invariant was violated at construction time.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    /// An operation that requires a probability measure received an
    /// unnormalized one.
    #[error("measure is not normalized (total mass {0})")]
    NotNormalized(f64),
    /// A configured size cap was exceeded.
    #[error("cap exceeded: {what} needs {needed}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
    },
    /// A sequential experiment has already stopped.
    #[error("experiment terminated: {0}")]
    Terminated(String),
    /// The requested object cannot be expressed in the representable class.
    #[error("not representable: {0}")]
    NotRepresentable(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
