use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input line. Recoverable: callers may skip and count.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// The event stream presented a day smaller than one already seen.
    #[error("events out of day order: day {seen} after day {prev}")]
    DayOrder { prev: u32, seen: u32 },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("empty input: {0}")]
    EmptyInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
