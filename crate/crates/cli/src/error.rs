use std::fmt;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DEPENDENCY: u8 = 3;
pub const EXIT_TRANSPORT: u8 = 4;

impl CliError {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            error: e.into(),
        }
    }

    pub fn dependency(message: String) -> Self {
        CliError {
            code: EXIT_DEPENDENCY,
            error: anyhow::anyhow!(message),
        }
    }

    pub fn transport(message: String) -> Self {
        CliError {
            code: EXIT_TRANSPORT,
            error: anyhow::anyhow!(message),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError {
            code: EXIT_OTHER,
            error: e.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}
