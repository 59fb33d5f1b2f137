use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors surfaced by the cascade workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("branch {branch} references nonexistent bus {bus}")]
    DanglingEndpoint { branch: usize, bus: usize },
    #[error("branch {branch} has nonpositive reactance {reactance}")]
    NonpositiveReactance { branch: usize, reactance: f64 },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: usize },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid contingency: {0}")]
    InvalidContingency(String),
    #[error("island {island} is unbalanced by {mismatch} MW")]
    Unbalanced { island: usize, mismatch: f64 },
    #[error("singular susceptance matrix in island {island}")]
    SingularSusceptance { island: usize },
    #[error("full service is infeasible on the intact network at loading {loading} (served fraction {sigma:.4})")]
    InfeasibleInitialization { loading: f64, sigma: f64 },
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("threshold pool is empty")]
    EmptyThresholdPool,
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable code for CLI and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "syntax",
            Error::DanglingEndpoint { .. } => "dangling_endpoint",
            Error::NonpositiveReactance { .. } => "nonpositive_reactance",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::InvalidNetwork(_) => "invalid_network",
            Error::InvalidContingency(_) => "invalid_contingency",
            Error::Unbalanced { .. } => "unbalanced",
            Error::SingularSusceptance { .. } => "singular_susceptance",
            Error::InfeasibleInitialization { .. } => "infeasible_initialization",
            Error::Lp(_) => "lp_failure",
            Error::Dimension(_) => "dimension_mismatch",
            Error::EmptyThresholdPool => "empty_threshold_pool",
            Error::ArtifactMismatch(_) => "artifact_mismatch",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}

/// Machine-readable error document shared by the CLI and the HTTP service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        let detail = match e {
            Error::Syntax { line, column, .. } => Some(serde_json::json!({ "line": line, "column": column })),
            Error::InfeasibleInitialization { loading, sigma } => {
                Some(serde_json::json!({ "loading_c": loading, "sigma": sigma }))
            }
            Error::SchemaVersion { found, expected } => {
                Some(serde_json::json!({ "found": found, "expected": expected }))
            }
            _ => None,
        };
        ErrorBody { code: e.code().to_string(), message: e.to_string(), detail }
    }
}
