use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by tensor operations, blocks and generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An index or permutation entry lies outside its axis.
    Index { op: &'static str, index: usize, len: usize },
    /// A configuration or hyperparameter constraint is violated.
    Config(String),
    /// A degradation parameter is out of its domain.
    Param(String),
    /// The caller broke an API contract (wrong arity, non-scalar loss, ...).
    Contract(String),
    /// `backward` was already run on this tape.
    TapeExhausted,
    /// A loss term or gradient became NaN or infinite.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Index { op, index, len } => {
                write!(f, "{op}: index {index} out of range for axis of length {len}")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Param(msg) => write!(f, "parameter error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::TapeExhausted => write!(f, "backward already ran on this tape"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T> {
    Err(Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}
