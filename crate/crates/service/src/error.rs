use serde::{Deserialize, Serialize};
use serde_json::Value;
use tickscope_core::classify::ClassifyError;
use tickscope_core::eval::EvalError;
use tickscope_core::index::SearchError;
use tickscope_core::ingest::IngestError;
use tickscope_core::model::SchemaViolation;
use tickscope_core::store::StoreError;
use tickscope_core::themes::ThemeError;

/// Machine-readable error body shared by the HTTP API and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            field: None,
            details: None,
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(400, "MalformedRequest", message)
    }

    pub fn missing_seed() -> Self {
        Self::new(400, "MissingSeed", "randomized operations need an explicit seed").with_field("seed")
    }

    pub fn no_corpus() -> Self {
        Self::new(404, "NoCorpus", "no corpus has been ingested yet")
    }

    pub fn busy(kind: &str) -> Self {
        Self::new(409, "ExclusiveJobRunning", format!("another {kind} job is running"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "Internal", message)
    }

    /// Domain errors exit with 1; everything here is a domain error.
    pub fn exit_code(&self) -> i32 {
        1
    }

    fn from_tagged<E: Serialize + std::fmt::Display>(status: u16, err: &E) -> Self {
        let value = serde_json::to_value(err).unwrap_or(Value::Null);
        let code = value
            .get("code")
            .and_then(Value::as_str)
            .unwrap_or("Error")
            .to_string();
        let field = value.get("field").and_then(Value::as_str).map(String::from);
        Self {
            status,
            code,
            message: err.to_string(),
            field,
            details: None,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = match e {
            SearchError::EmptyText => 400,
            SearchError::UnknownTicket { .. } => 404,
            SearchError::CorpusMismatch => 500,
            _ => 422,
        };
        let field = e.field().map(String::from);
        Self {
            field,
            ..Self::from_tagged(status, &e)
        }
    }
}

impl From<ClassifyError> for ApiError {
    fn from(e: ClassifyError) -> Self {
        let (status, field) = match &e {
            ClassifyError::EmptyText => (400, Some("summary")),
            ClassifyError::DuplicateEventId { .. } => (409, Some("event_id")),
            ClassifyError::UnknownLabel { .. } => (422, Some("label")),
            ClassifyError::TargetMismatch { .. } => (422, Some("target_field")),
            ClassifyError::BadBandwidth => (422, Some("gamma")),
            ClassifyError::BadNeighbourCount => (422, Some("k")),
            ClassifyError::VocabularyMismatch { .. } | ClassifyError::BadModelFile { .. } => (500, None),
            _ => (422, None),
        };
        Self {
            field: field.map(String::from),
            ..Self::from_tagged(status, &e)
        }
    }
}

impl From<ThemeError> for ApiError {
    fn from(e: ThemeError) -> Self {
        let (status, field) = match &e {
            ThemeError::UnknownPhrase { .. } => (404, None),
            ThemeError::UnknownTagField { .. } => (422, Some("tag_field")),
            ThemeError::RankTooLarge { .. } => (422, Some("lsa_rank")),
            _ => (422, None),
        };
        Self {
            field: field.map(String::from),
            ..Self::from_tagged(status, &e)
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let (status, field) = match &e {
            EvalError::Training(inner) => return inner.clone().into(),
            EvalError::BadJudgmentLine { .. } => (400, Some("judgments")),
            EvalError::BadFoldCount => (422, Some("folds")),
            EvalError::BadK => (422, Some("k")),
            EvalError::HoldoutTooSmall { .. } | EvalError::UnknownTicket { .. } => (422, Some("holdout")),
            _ => (422, None),
        };
        Self {
            field: field.map(String::from),
            ..Self::from_tagged(status, &e)
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let status = match e {
            IngestError::UnreadableSource { .. } | IngestError::BadDelimiter { .. } => 400,
            _ => 422,
        };
        let field = match &e {
            IngestError::MissingColumn { field, .. } => Some(field.clone()),
            IngestError::BadDelimiter { .. } => Some("delimiter".into()),
            _ => None,
        };
        Self {
            field,
            ..Self::from_tagged(status, &e)
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::UnknownVersion { .. } => 404,
            StoreError::DuplicateEventId { .. } => 409,
            _ => 500,
        };
        let field = matches!(e, StoreError::DuplicateEventId { .. }).then(|| "event_id".to_string());
        Self {
            status,
            code: e.code().to_string(),
            message: e.to_string(),
            field,
            details: None,
        }
    }
}

pub fn schema_error(violations: Vec<SchemaViolation>) -> ApiError {
    let message = violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ");
    ApiError::new(422, "InvalidSchema", message)
        .with_details(serde_json::to_value(&violations).unwrap_or(Value::Null))
}
