use bayes_bmd::BmdError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA_FAILURE: i32 = 2;
    pub const ALGORITHM_FAILURE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("data failure: {0}")]
    DataFailure(String),

    #[error("algorithm failure: {0}")]
    Algorithm(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Dataset(_) | CliError::Io(_) => {
                exit::USAGE
            }
            CliError::DataFailure(_) => exit::DATA_FAILURE,
            CliError::Algorithm(_) => exit::ALGORITHM_FAILURE,
        }
    }
}

impl From<BmdError> for CliError {
    fn from(e: BmdError) -> Self {
        match e {
            BmdError::DataFailure(_) | BmdError::InfiniteBmd { .. } => {
                CliError::DataFailure(e.to_string())
            }
            BmdError::InvalidConfig(_) | BmdError::Domain(_) => CliError::Config(e.to_string()),
            BmdError::InvalidDataset(_) => CliError::Dataset(e.to_string()),
            _ => CliError::Algorithm(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}
