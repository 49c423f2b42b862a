use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes shared across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on a scalar argument does not hold.
    InvalidArgument { name: &'static str, reason: String },
    /// A collection that must be non-empty was empty.
    Empty(&'static str),
    /// Two sequences that must align have different lengths.
    LengthMismatch { left: usize, right: usize },
    /// A cluster label lies outside `0..k`.
    LabelOutOfRange { index: usize, label: usize, k: usize },
    /// A table entry is malformed; `row` is zero-based.
    InvalidEntry { row: usize, reason: String },
    /// The same name appears twice in a frequency table.
    DuplicateName(String),
    /// A capture table asks for more entities than the population holds.
    TooManyEntities { requested: u64, available: u64 },
    /// An iterative solver hit its iteration cap.
    NonConvergence { iterations: usize, last: f64 },
    /// The input carries too little information to fit the model.
    Degenerate(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument { name, reason } => write!(f, "invalid `{name}`: {reason}"),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::LabelOutOfRange { index, label, k } => {
                write!(f, "label {label} at position {index} is outside 0..{k}")
            }
            Error::InvalidEntry { row, reason } => write!(f, "row {}: {reason}", row + 1),
            Error::DuplicateName(name) => write!(f, "duplicate name {name:?}"),
            Error::TooManyEntities {
                requested,
                available,
            } => write!(
                f,
                "capture table holds {requested} entities but only {available} exist"
            ),
            Error::NonConvergence { iterations, last } => write!(
                f,
                "no convergence after {iterations} iterations (last iterate {last})"
            ),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
