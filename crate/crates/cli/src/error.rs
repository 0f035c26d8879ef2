use std::fmt;

use serde::Serialize;

use pbforecast::data::DataError;
use pbforecast::features::{EmbedError, FeatureError};
use pbforecast::llm::LlmError;
use pbforecast::metrics::MetricError;
use pbforecast::models::ModelError;

/// Failure classes, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Validation,
    NotFound,
    MissingFixture,
    Provider,
    Incomplete,
    Data,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Internal => 1,
            ErrorKind::Usage => 2,
            ErrorKind::Validation => 3,
            ErrorKind::NotFound => 4,
            ErrorKind::MissingFixture => 5,
            ErrorKind::Provider => 6,
            ErrorKind::Incomplete => 7,
            ErrorKind::Data => 8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, message)
    }

    /// The structured form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": {
            "code": self.kind,
            "exit_code": self.kind.exit_code(),
            "message": self.message,
            "details": self.details,
        }})
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match &e {
            DataError::Invalid(report) => CliError::new(ErrorKind::Validation, e.to_string())
                .with_details(serde_json::to_value(&report.violations).unwrap_or_default()),
            DataError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::new(ErrorKind::NotFound, e.to_string())
            }
            DataError::Io { .. } | DataError::RunParse { .. } => CliError::new(ErrorKind::Data, e.to_string()),
            _ => CliError::new(ErrorKind::Validation, e.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let kind = match &e {
            LlmError::MissingFixture { .. } => ErrorKind::MissingFixture,
            LlmError::Auth { .. }
            | LlmError::Http { .. }
            | LlmError::Network(_)
            | LlmError::BadResponse(_)
            | LlmError::MissingKey(_)
            | LlmError::Embed(_) => ErrorKind::Provider,
            LlmError::Store { .. } => ErrorKind::Data,
            LlmError::NoBackend(_) | LlmError::Invalid(_) | LlmError::Prompt(_) => ErrorKind::Usage,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        let kind = match e {
            EmbedError::EmptyText => ErrorKind::Validation,
            EmbedError::Cache { .. } => ErrorKind::Data,
            _ => ErrorKind::Provider,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Embed(inner) => inner.into(),
            FeatureError::DimOutOfRange { .. } => CliError::usage(e.to_string()),
            other => CliError::new(ErrorKind::Data, other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Feature(inner) => inner.into(),
            ModelError::InvalidK { .. } => CliError::usage(e.to_string()),
            other => CliError::new(ErrorKind::Data, other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let kind = match e {
            MetricError::Incomplete { .. } => ErrorKind::Incomplete,
            MetricError::KOutOfRange { .. } => ErrorKind::Usage,
            _ => ErrorKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ErrorKind::Data, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new(ErrorKind::Internal, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
