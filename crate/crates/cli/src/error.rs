use arcross_core::grid::BuildFailure;
use arcross_core::store::StoreError;
use serde_json::json;
use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_PIPELINE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_STORE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{message}")]
    Pipeline { kind: &'static str, message: String },
    #[error("{0}")]
    Build(BuildFailure),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn pipeline(kind: &'static str, message: impl std::fmt::Display) -> Self {
        Self::Pipeline { kind, message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Store(StoreError::Missing(_) | StoreError::SchemaMismatch { .. }) => EXIT_STORE,
            Self::Usage(_) => EXIT_USAGE,
            _ => EXIT_PIPELINE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Store(StoreError::Missing(_)) => "store-missing",
            Self::Store(StoreError::SchemaMismatch { .. }) => "schema-mismatch",
            Self::Store(_) => "store-error",
            Self::Pipeline { kind, .. } => kind,
            Self::Build(_) => "build-failed",
            Self::Usage(_) => "usage",
        }
    }

    /// The one-line JSON written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({"error": self.kind(), "message": self.to_string()});
        if let Self::Build(failure) = self {
            v["diagnostics"] = serde_json::to_value(failure).expect("failure serializes");
        }
        v
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::pipeline("io", e)
    }
}
