use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration key is malformed, unknown, or violates an invariant.
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("occupancy string has length {found}, expected {expected} at {granularity_s} s granularity")]
    OccupancyLength {
        expected: usize,
        found: usize,
        granularity_s: u32,
    },

    #[error("invalid occupancy symbol {symbol:?} at position {position} (only '0' and '1' allowed)")]
    OccupancySymbol { position: usize, symbol: char },

    #[error("granularity mismatch: expected {expected} s, found {found} s")]
    Granularity { expected: u32, found: u32 },

    #[error("string lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("error matrix needs at least 2 strings, got {0}")]
    TooFewStrings(usize),

    #[error("no candidates for target error {target:.3} within tolerance ±{max_tol:.3}")]
    NoCandidates { target: f64, max_tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied data or configuration, as opposed to
    /// I/O failures.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
