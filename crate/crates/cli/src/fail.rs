use std::fmt;

/// Error reported on stderr as one JSON object before a non-zero exit.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = serde_json::json!({ "error": self.kind, "message": self.message });
        write!(f, "{body}")
    }
}

impl From<thermorbm::Error> for CliError {
    fn from(e: thermorbm::Error) -> Self {
        let kind = match &e {
            thermorbm::Error::Io(_) => "io",
            thermorbm::Error::Format { .. } | thermorbm::Error::Truncated { .. } => "format",
            thermorbm::Error::InvalidConfig(_) => "config",
            _ => "engine",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("schema", e.to_string())
    }
}
