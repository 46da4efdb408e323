use std::fmt;

/// Failure of a CLI invocation, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid configuration, missing inputs.
    Usage(anyhow::Error),
    /// A pipeline stage failed on valid inputs.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::Usage(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<evscan_core::Error> for CliError {
    fn from(e: evscan_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Marks errors from config parsing and validation as usage errors.
pub trait UsageContext<T> {
    fn usage(self, what: &str) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn usage(self, what: &str) -> CliResult<T> {
        self.map_err(|e| CliError::Usage(e.into().context(what.to_string())))
    }
}
