use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Payload did not parse as JSON or CSV ingest.
    #[error("parse error at line {line}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
    Parse {
        line: u64,
        field: Option<String>,
        message: String,
    },

    /// Payload parsed but failed validation; the report lists every problem.
    #[error("dataset rejected with {} validation error(s)", .0.errors.len())]
    Validation(Box<ValidationReport>),

    #[error("{kind} `{name}` not found")]
    NotFound { kind: &'static str, name: String },

    /// An expression or query names a classifier, feature, class or
    /// instance that does not exist.
    #[error("unknown {kind} `{name}`")]
    Reference { kind: RefKind, name: String },

    #[error("{0}")]
    Conflict(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("policy `{policy}` is only defined for accuracy, not `{metric}`")]
    UnsupportedPolicy { metric: String, policy: String },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("feature `{0}` is not numeric")]
    NotNumeric(String),

    #[error("scope is empty")]
    EmptyScope,

    #[error("partition would be empty: {0}")]
    EmptyPartition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefKind {
    Classifier,
    Feature,
    Class,
    Instance,
    Selection,
}

impl std::fmt::Display for RefKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RefKind::Classifier => "classifier",
            RefKind::Feature => "feature",
            RefKind::Class => "class",
            RefKind::Instance => "instance",
            RefKind::Selection => "selection",
        })
    }
}

impl Error {
    pub(crate) fn unknown(kind: RefKind, name: impl Into<String>) -> Self {
        Error::Reference {
            kind,
            name: name.into(),
        }
    }

    pub(crate) fn not_found(kind: &'static str, name: impl Into<String>) -> Self {
        Error::NotFound {
            kind,
            name: name.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable machine-readable code, used in HTTP error bodies and by the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Validation(_) => "VALIDATION_FAILED",
            Error::NotFound { .. } => "NOT_FOUND",
            Error::Reference { kind, .. } => match kind {
                RefKind::Classifier => "UNKNOWN_CLASSIFIER",
                RefKind::Feature => "UNKNOWN_FEATURE",
                RefKind::Class => "UNKNOWN_CLASS",
                RefKind::Instance => "UNKNOWN_INSTANCE",
                RefKind::Selection => "UNKNOWN_SELECTION",
            },
            Error::Conflict(_) => "CONFLICT",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::UnsupportedPolicy { .. } => "UNSUPPORTED_POLICY",
            Error::Undefined(_) => "UNDEFINED_METRIC",
            Error::NotNumeric(_) => "NOT_NUMERIC",
            Error::EmptyScope => "EMPTY_SCOPE",
            Error::EmptyPartition(_) => "EMPTY_PARTITION",
        }
    }
}
