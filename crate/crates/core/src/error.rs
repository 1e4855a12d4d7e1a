use thiserror::Error;

/// Errors produced by the PVBS laboratory.
#[derive(Debug, Error)]
pub enum PvbsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("region is not connected")]
    Disconnected,

    #[error("size cap exceeded: {what} needs {requested}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("{what} out of range: {value} (allowed {allowed})")]
    OutOfRange {
        what: &'static str,
        value: i64,
        allowed: String,
    },

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("eigensolver did not converge: {0}")]
    NonConvergence(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PvbsError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PvbsError::NonConvergence(_) => 3,
            PvbsError::Consistency(_) => 4,
            PvbsError::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PvbsError>;
