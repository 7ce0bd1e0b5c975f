use std::fmt;
use std::path::Path;

/// Exit status for input and configuration problems.
pub const EXIT_INPUT: u8 = 2;
/// Exit status for numerical failures (singular fits, divergence, ...).
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, msg: msg.into() }
    }

    /// Prefixes the message, keeping the exit code.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self { code: self.code, msg: format!("{what}: {}", self.msg) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<memres::Error> for CliError {
    fn from(e: memres::Error) -> Self {
        if e.is_numerical() {
            Self::numerical(e.to_string())
        } else {
            Self::input(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the path to any error raised while handling a file.
pub fn at<T, E: Into<CliError>>(path: &Path, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| e.into().context(path.display()))
}
