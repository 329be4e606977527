use serde::Serialize;
use std::fmt;
use std::path::Path;

/// A failure reported to the user as one JSON line on stderr.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    /// `config`, `input`, `io` or `run`.
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            error: "config",
            message: message.into(),
            key: None,
            location: None,
        }
    }

    pub fn config_key(key: &str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            error: "config",
            message: message.into(),
            key: Some(key.to_string()),
            location: Some(location.into()),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            error: "input",
            message: message.into(),
            key: None,
            location: None,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            error: "io",
            message: format!("{}: {e}", path.display()),
            key: None,
            location: None,
        }
    }

    pub fn run(e: impl fmt::Display) -> Self {
        Self {
            error: "run",
            message: e.to_string(),
            key: None,
            location: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.error {
            "config" => 3,
            "input" | "io" => 4,
            _ => 1,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.error, self.message)
    }
}

impl std::error::Error for CliError {}
