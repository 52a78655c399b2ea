use std::fmt;

/// Command failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration.
    Usage(String),
    /// Broker or other environment problem.
    Environment(String),
    /// Failure while computing.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Environment(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Environment(m) => write!(f, "environment error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fedhet::Error> for CliError {
    fn from(e: fedhet::Error) -> Self {
        use fedhet::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::InvalidArgument(_) => CliError::Usage(msg),
            E::Broker(_) | E::Transport(_) => CliError::Environment(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
