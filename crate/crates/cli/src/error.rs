use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("canonicalization failed: {0}")]
    Canonical(alphapred::Error),
    #[error("identity check failed: {0}")]
    Identity(String),
    #[error("Monte Carlo guard: {0}")]
    Guard(alphapred::Error),
    #[error("{0}")]
    Runtime(alphapred::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Runtime(_) | CliError::Io(_) => 1,
            CliError::Canonical(_) => 2,
            CliError::Identity(_) => 3,
            CliError::Guard(_) => 4,
        }
    }
}

impl From<alphapred::Error> for CliError {
    fn from(e: alphapred::Error) -> Self {
        match e {
            alphapred::Error::ExclusionCeiling { .. } | alphapred::Error::UnreliableNormalization { .. } => {
                CliError::Guard(e)
            }
            other => CliError::Runtime(other),
        }
    }
}
