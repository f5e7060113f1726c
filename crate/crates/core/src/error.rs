use thiserror::Error;

/// Errors surfaced by the library. Contract violations (bad configs, bad
/// data) are distinguished from numerical failures so the CLI can map them
/// to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("invalid value '{value}' for column '{column}' (row {row})")]
    InvalidValue {
        column: String,
        row: usize,
        value: String,
    },

    #[error("column '{column}': {reason}")]
    BadColumn { column: String, reason: String },

    #[error("no complete cases")]
    NoCompleteCases,

    #[error("dataset is not complete: {0} masked cells")]
    NotComplete(usize),

    #[error("{0}")]
    Contract(String),

    #[error("perfect separation detected (columns: {0:?})")]
    Separation(Vec<String>),

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("IPW infeasible: {0}")]
    IpwInfeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by user input (config, schema, file contents)
    /// rather than by the computation itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::UnknownColumn(_)
                | Error::InvalidValue { .. }
                | Error::BadColumn { .. }
                | Error::Json(_)
        )
    }
}
