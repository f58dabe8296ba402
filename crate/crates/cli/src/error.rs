use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Schema(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Schema(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Schema(m) => write!(f, "schema mismatch: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nrb_core::Error> for CliError {
    fn from(e: nrb_core::Error) -> Self {
        match e {
            nrb_core::Error::SchemaMismatch(m) => CliError::Schema(m),
            nrb_core::Error::InvalidInput(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}
