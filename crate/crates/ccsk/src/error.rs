//! Crate error type.

use std::fmt;
use std::io;

/// Unified error for the simulator.
#[derive(Debug)]
pub enum Error {
    /// A value left the domain a chaotic map is defined on.
    Domain {
        map: &'static str,
        value: f64,
    },
    /// Invalid argument or configuration.
    Parameter(String),
    /// Operation applied in the wrong state (e.g. double standardization).
    State(String),
    /// Non-finite value produced inside a numeric kernel.
    Numeric {
        context: &'static str,
        detail: String,
    },
    /// Malformed checkpoint or results file.
    Format(String),
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { map, value } => {
                write!(f, "state {value} is outside the valid interval of the {map} map")
            }
            Error::Parameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::Numeric { context, detail } => {
                write!(f, "numeric failure in {context}: {detail}")
            }
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

/// Shorthand for `Error::Parameter` with formatting.
macro_rules! param_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Parameter(format!($($arg)*))
    };
}
pub(crate) use param_err;
