use parabench_core::Error as CoreError;
use parabench_duotower::DuoError;
use serde_json::{json, Value};

/// Failure of one invocation, classified for the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or arguments. Exit 2.
    Usage(String),
    /// Inputs that parse but violate a contract. Exit 3.
    Validation { message: String, details: Value },
    /// Anything that went wrong while running. Exit 1.
    Runtime(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError::Validation { message: message.into(), details: Value::Null }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation { .. } => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation { .. } => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Validation { message: m, .. } => m,
        }
    }

    /// The single-line JSON object written to stderr.
    pub fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "code": self.exit_code(), "message": self.message() });
        if let CliError::Validation { details, .. } = self {
            if !details.is_null() {
                err["details"] = details.clone();
            }
        }
        json!({ "error": err })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { .. } => CliError::Runtime(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<DuoError> for CliError {
    fn from(e: DuoError) -> Self {
        match e {
            DuoError::Core(inner) => inner.into(),
            DuoError::DivergedTraining { .. } => CliError::Runtime(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::validation(format!("malformed JSON: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
