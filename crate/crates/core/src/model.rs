//! Ticket data model, field configuration and the shared term vocabulary.
//!
//! A [`Corpus`] is immutable once built. Every analytic (search, classifiers,
//! theme mining) reads from it; re-ingestion produces a new corpus value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::TextPipeline;

/// Names of the predefined ticket fields.
pub mod fields {
    pub const ID: &str = "id";
    pub const SUMMARY: &str = "summary";
    pub const DESCRIPTION: &str = "description";
    pub const ASSIGNEE: &str = "assignee";
    pub const BUSINESS_PROCESS: &str = "business_process";
    pub const CREATED_DATE: &str = "created_date";
    pub const MODULE_TAG: &str = "module_tag";
    pub const PRIORITY: &str = "priority";
    pub const STATUS: &str = "status";

    pub const PREDEFINED: [&str; 9] = [
        ID,
        SUMMARY,
        DESCRIPTION,
        ASSIGNEE,
        BUSINESS_PROCESS,
        CREATED_DATE,
        MODULE_TAG,
        PRIORITY,
        STATUS,
    ];
}

pub const DEFAULT_STATUSES: [&str; 4] = ["Closed", "Open", "Assigned", "Re-Opened"];

/// One incident as exported from a maintenance tool.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TicketRecord {
    pub id: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub assignee: String,
    #[serde(default)]
    pub business_process: String,
    #[serde(default)]
    pub created_date: Option<DateTime<Utc>>,
    #[serde(default)]
    pub module_tag: String,
    #[serde(default)]
    pub priority: String,
    /// Empty when the export carries no status.
    #[serde(default)]
    pub status: String,
    #[serde(default)]
    pub custom: BTreeMap<String, String>,
}

impl TicketRecord {
    pub fn new(id: impl Into<String>, summary: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            summary: summary.into(),
            ..Self::default()
        }
    }

    /// Looks up a field value by schema name. Predefined fields shadow custom
    /// fields of the same name.
    pub fn field_value(&self, name: &str) -> Option<&str> {
        let value = match name {
            fields::ID => &self.id,
            fields::SUMMARY => &self.summary,
            fields::DESCRIPTION => &self.description,
            fields::ASSIGNEE => &self.assignee,
            fields::BUSINESS_PROCESS => &self.business_process,
            fields::MODULE_TAG => &self.module_tag,
            fields::PRIORITY => &self.priority,
            fields::STATUS => &self.status,
            fields::CREATED_DATE => return None,
            other => return self.custom.get(other).map(String::as_str),
        };
        Some(value.as_str())
    }

    pub fn has_text(&self) -> bool {
        !self.summary.trim().is_empty() || !self.description.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Predefined,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    /// Shown with results.
    Information,
    /// Usable as a search filter at its `filter_level`.
    Filter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    pub role: FieldRole,
    /// 0 for information fields; 1 is the top of the filter hierarchy.
    #[serde(default)]
    pub filter_level: u32,
    pub column_mapping: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datetime_format: Option<String>,
}

impl FieldSchema {
    pub fn information(name: &str, column: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: kind_for(name),
            role: FieldRole::Information,
            filter_level: 0,
            column_mapping: column.to_string(),
            datetime_format: None,
        }
    }

    pub fn filter(name: &str, column: &str, level: u32) -> Self {
        Self {
            role: FieldRole::Filter,
            filter_level: level,
            ..Self::information(name, column)
        }
    }

    pub fn with_datetime_format(mut self, format: &str) -> Self {
        self.datetime_format = Some(format.to_string());
        self
    }
}

fn kind_for(name: &str) -> FieldKind {
    if fields::PREDEFINED.contains(&name) {
        FieldKind::Predefined
    } else {
        FieldKind::Custom
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "PascalCase")]
pub enum SchemaViolation {
    #[error("schema has no fields")]
    EmptySchema,
    #[error("column {column:?} is mapped by more than one field: {fields:?}")]
    DuplicateColumnMapping { column: String, fields: Vec<String> },
    #[error("filter levels {levels:?} do not form the range 1..={expected_max}")]
    NonContiguousFilterLevels { levels: Vec<u32>, expected_max: u32 },
    #[error("filter field {field:?} has no filter level")]
    FilterWithoutLevel { field: String },
    #[error("information field {field:?} has filter level {level}")]
    LevelWithoutFilter { field: String, level: u32 },
    #[error("field {field:?} is declared more than once")]
    DuplicateField { field: String },
    #[error("field {field:?} is declared {declared:?} but is {actual:?}")]
    WrongFieldKind {
        field: String,
        declared: FieldKind,
        actual: FieldKind,
    },
}

/// A field configuration that passed [`validate_schema`], plus the accepted
/// status vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    fields: Vec<FieldSchema>,
    statuses: Vec<String>,
}

impl Schema {
    pub fn fields(&self) -> &[FieldSchema] {
        &self.fields
    }

    pub fn statuses(&self) -> &[String] {
        &self.statuses
    }

    /// Replaces the accepted status vocabulary (Table-1 defaults otherwise).
    pub fn with_statuses<I, S>(mut self, statuses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.statuses = statuses.into_iter().map(Into::into).collect();
        self
    }

    pub fn field(&self, name: &str) -> Option<&FieldSchema> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Filter fields in hierarchy order.
    pub fn filter_fields(&self) -> Vec<&FieldSchema> {
        let mut filters: Vec<_> = self
            .fields
            .iter()
            .filter(|f| f.role == FieldRole::Filter)
            .collect();
        filters.sort_by_key(|f| f.filter_level);
        filters
    }

    /// The usual export layout: ID, Summary, Description, Assignee, Business
    /// Process, Created Date, Module (filter), Priority (filter), Status.
    pub fn default_tickets() -> Self {
        let fields = vec![
            FieldSchema::information(fields::ID, "ID"),
            FieldSchema::information(fields::SUMMARY, "Summary"),
            FieldSchema::information(fields::DESCRIPTION, "Description"),
            FieldSchema::information(fields::ASSIGNEE, "Assignee"),
            FieldSchema::information(fields::BUSINESS_PROCESS, "Business Process"),
            FieldSchema::information(fields::CREATED_DATE, "Created Date")
                .with_datetime_format("%Y-%m-%d %H:%M:%S"),
            FieldSchema::filter(fields::MODULE_TAG, "Module", 1),
            FieldSchema::filter(fields::PRIORITY, "Priority", 2),
            FieldSchema::information(fields::STATUS, "Status"),
        ];
        validate_schema(&fields).expect("default schema is valid")
    }
}

/// Checks every field-configuration invariant and reports all violations.
pub fn validate_schema(fields: &[FieldSchema]) -> Result<Schema, Vec<SchemaViolation>> {
    if fields.is_empty() {
        return Err(vec![SchemaViolation::EmptySchema]);
    }
    let mut violations = Vec::new();

    let mut seen_names = BTreeSet::new();
    for f in fields {
        if !seen_names.insert(f.name.as_str()) {
            violations.push(SchemaViolation::DuplicateField {
                field: f.name.clone(),
            });
        }
        let actual = kind_for(&f.name);
        if f.kind != actual {
            violations.push(SchemaViolation::WrongFieldKind {
                field: f.name.clone(),
                declared: f.kind,
                actual,
            });
        }
        match (f.role, f.filter_level) {
            (FieldRole::Filter, 0) => violations.push(SchemaViolation::FilterWithoutLevel {
                field: f.name.clone(),
            }),
            (FieldRole::Information, level) if level > 0 => {
                violations.push(SchemaViolation::LevelWithoutFilter {
                    field: f.name.clone(),
                    level,
                })
            }
            _ => {}
        }
    }

    let mut by_column: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for f in fields {
        by_column
            .entry(f.column_mapping.as_str())
            .or_default()
            .push(f.name.clone());
    }
    for (column, names) in by_column {
        if names.len() > 1 {
            violations.push(SchemaViolation::DuplicateColumnMapping {
                column: column.to_string(),
                fields: names,
            });
        }
    }

    // Levels must be exactly 1..=n, one field per level.
    let mut levels: Vec<u32> = fields
        .iter()
        .filter(|f| f.role == FieldRole::Filter && f.filter_level > 0)
        .map(|f| f.filter_level)
        .collect();
    levels.sort_unstable();
    let contiguous = levels
        .iter()
        .enumerate()
        .all(|(i, &level)| level as usize == i + 1);
    if !contiguous {
        violations.push(SchemaViolation::NonContiguousFilterLevels {
            expected_max: levels.len() as u32,
            levels,
        });
    }

    if violations.is_empty() {
        Ok(Schema {
            fields: fields.to_vec(),
            statuses: DEFAULT_STATUSES.iter().map(|s| s.to_string()).collect(),
        })
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "PascalCase")]
pub enum TicketRejection {
    #[error("ticket id is empty")]
    EmptyId,
    #[error("both summary and description are empty")]
    EmptyText,
    #[error("custom field {field:?} is not configured")]
    UnknownCustomField { field: String },
    #[error("status {status:?} is not in the configured vocabulary")]
    BadStatus { status: String },
    #[error("ticket id {id:?} occurs more than once")]
    DuplicateId { id: String },
    #[error("could not parse date {value:?} with format {format:?}")]
    BadDate { value: String, format: String },
    #[error("malformed row: {detail}")]
    MalformedRow { detail: String },
}

impl TicketRejection {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyId => "EmptyId",
            Self::EmptyText => "EmptyText",
            Self::UnknownCustomField { .. } => "UnknownCustomField",
            Self::BadStatus { .. } => "BadStatus",
            Self::DuplicateId { .. } => "DuplicateId",
            Self::BadDate { .. } => "BadDate",
            Self::MalformedRow { .. } => "MalformedRow",
        }
    }
}

pub fn validate_ticket(ticket: &TicketRecord, schema: &Schema) -> Result<(), TicketRejection> {
    if ticket.id.trim().is_empty() {
        return Err(TicketRejection::EmptyId);
    }
    if !ticket.has_text() {
        return Err(TicketRejection::EmptyText);
    }
    for key in ticket.custom.keys() {
        let known = schema
            .field(key)
            .is_some_and(|f| f.kind == FieldKind::Custom);
        if !known {
            return Err(TicketRejection::UnknownCustomField { field: key.clone() });
        }
    }
    if !ticket.status.is_empty() && !schema.statuses.contains(&ticket.status) {
        return Err(TicketRejection::BadStatus {
            status: ticket.status.clone(),
        });
    }
    Ok(())
}

/// Dense term → id map. Ids follow first occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `term`, assigning the next dense id if it is new.
    pub fn intern(&mut self, term: &str) -> u32 {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.terms.push(term.to_string());
        self.ids.insert(term.to_string(), id);
        id
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        let mut vocab = Vocabulary::new();
        for t in &terms {
            vocab.intern(t);
        }
        vocab
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.terms
    }
}

/// Text that gets indexed and featurized for a ticket. The summary is
/// repeated once as a field boost.
pub fn indexed_text(ticket: &TicketRecord) -> String {
    indexed_text_of(&ticket.summary, &ticket.description)
}

pub fn indexed_text_of(summary: &str, description: &str) -> String {
    format!("{summary} {summary} {description}")
}

/// Collects every normalized token of summary + description.
pub fn build_vocabulary(tickets: &[TicketRecord], pipeline: &TextPipeline) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for t in tickets {
        for text in [&t.summary, &t.description] {
            for token in pipeline.tokenize(text) {
                vocab.intern(&token.normalized);
            }
        }
    }
    vocab
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("ticket {id:?} rejected: {reason}")]
    Rejected { id: String, reason: TicketRejection },
}

/// Hex SHA-256 over the canonical serialization of schema, tickets and
/// vocabulary. The ingestion timestamp is excluded so that identical inputs
/// hash identically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContentHash(pub String);

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    schema: Schema,
    tickets: Vec<TicketRecord>,
    vocabulary: Vocabulary,
    pipeline: TextPipeline,
    ingested_at: DateTime<Utc>,
}

impl Corpus {
    /// Validates every ticket and builds the vocabulary.
    pub fn new(
        schema: Schema,
        tickets: Vec<TicketRecord>,
        pipeline: TextPipeline,
        ingested_at: DateTime<Utc>,
    ) -> Result<Self, CorpusError> {
        let mut ids = BTreeSet::new();
        for t in &tickets {
            validate_ticket(t, &schema).map_err(|reason| CorpusError::Rejected {
                id: t.id.clone(),
                reason,
            })?;
            if !ids.insert(t.id.as_str()) {
                return Err(CorpusError::Rejected {
                    id: t.id.clone(),
                    reason: TicketRejection::DuplicateId { id: t.id.clone() },
                });
            }
        }
        let vocabulary = build_vocabulary(&tickets, &pipeline);
        Ok(Self {
            schema,
            tickets,
            vocabulary,
            pipeline,
            ingested_at,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn tickets(&self) -> &[TicketRecord] {
        &self.tickets
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn pipeline(&self) -> &TextPipeline {
        &self.pipeline
    }

    pub fn ingested_at(&self) -> DateTime<Utc> {
        self.ingested_at
    }

    pub fn len(&self) -> usize {
        self.tickets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickets.is_empty()
    }

    pub fn ticket(&self, id: &str) -> Option<&TicketRecord> {
        self.position(id).map(|i| &self.tickets[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.tickets.iter().position(|t| t.id == id)
    }

    pub fn content_hash(&self) -> ContentHash {
        #[derive(Serialize)]
        struct Content<'a> {
            schema: &'a Schema,
            tickets: &'a [TicketRecord],
            vocabulary: &'a Vocabulary,
            pipeline: &'a TextPipeline,
        }
        let bytes = serde_json::to_vec(&Content {
            schema: &self.schema,
            tickets: &self.tickets,
            vocabulary: &self.vocabulary,
            pipeline: &self.pipeline,
        })
        .expect("corpus serializes");
        ContentHash(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levels(levels: &[u32]) -> Vec<FieldSchema> {
        let mut fields = vec![FieldSchema::information(fields::ID, "ID")];
        for (i, &l) in levels.iter().enumerate() {
            fields.push(FieldSchema::filter(&format!("geo{i}"), &format!("Geo{i}"), l));
        }
        fields
    }

    #[test]
    fn contiguous_levels_are_valid() {
        assert!(validate_schema(&levels(&[1, 2, 3])).is_ok());
        assert!(validate_schema(&levels(&[3, 1, 2])).is_ok());
    }

    #[test]
    fn gap_in_levels_is_rejected() {
        let err = validate_schema(&levels(&[1, 3])).unwrap_err();
        assert!(matches!(
            err.as_slice(),
            [SchemaViolation::NonContiguousFilterLevels { .. }]
        ));
    }

    #[test]
    fn repeated_level_is_rejected() {
        let err = validate_schema(&levels(&[1, 1])).unwrap_err();
        assert!(matches!(
            err.as_slice(),
            [SchemaViolation::NonContiguousFilterLevels { .. }]
        ));
    }

    #[test]
    fn duplicate_column_is_rejected() {
        let fields = vec![
            FieldSchema::information(fields::SUMMARY, "Summary"),
            FieldSchema::information(fields::DESCRIPTION, "Summary"),
        ];
        let err = validate_schema(&fields).unwrap_err();
        assert_eq!(
            err,
            vec![SchemaViolation::DuplicateColumnMapping {
                column: "Summary".into(),
                fields: vec!["summary".into(), "description".into()],
            }]
        );
    }

    #[test]
    fn all_violations_reported() {
        let mut bad = FieldSchema::filter("region", "Summary", 0);
        bad.kind = FieldKind::Custom;
        let fields = vec![
            FieldSchema::information(fields::SUMMARY, "Summary"),
            bad,
            FieldSchema::filter("city", "City", 3),
        ];
        let err = validate_schema(&fields).unwrap_err();
        assert_eq!(err.len(), 3, "{err:?}");
        assert!(err
            .iter()
            .any(|v| matches!(v, SchemaViolation::FilterWithoutLevel { .. })));
        assert!(err
            .iter()
            .any(|v| matches!(v, SchemaViolation::DuplicateColumnMapping { .. })));
        assert!(err
            .iter()
            .any(|v| matches!(v, SchemaViolation::NonContiguousFilterLevels { .. })));
    }

    #[test]
    fn validation_is_idempotent() {
        let schema = Schema::default_tickets();
        let again = validate_schema(schema.fields()).unwrap();
        assert_eq!(schema, again);
    }

    #[test]
    fn ticket_with_only_summary_is_accepted() {
        let schema = Schema::default_tickets();
        assert_eq!(validate_ticket(&TicketRecord::new("T1", "login fails"), &schema), Ok(()));
    }

    #[test]
    fn ticket_rejections() {
        let schema = Schema::default_tickets();
        let empty = TicketRecord::new("T1", "  ");
        assert_eq!(validate_ticket(&empty, &schema), Err(TicketRejection::EmptyText));

        let mut custom = TicketRecord::new("T2", "x");
        custom.custom.insert("Region".into(), "EU".into());
        assert_eq!(
            validate_ticket(&custom, &schema),
            Err(TicketRejection::UnknownCustomField {
                field: "Region".into()
            })
        );

        let mut status = TicketRecord::new("T3", "x");
        status.status = "Parked".into();
        assert!(matches!(
            validate_ticket(&status, &schema),
            Err(TicketRejection::BadStatus { .. })
        ));
        let extended = schema.with_statuses(["Parked"]);
        assert_eq!(validate_ticket(&status, &extended), Ok(()));
    }

    #[test]
    fn vocabulary_from_two_tickets() {
        let pipeline = TextPipeline::default();
        let tickets = vec![
            TicketRecord::new("1", "alpha beta"),
            TicketRecord::new("2", "beta gamma"),
        ];
        let vocab = build_vocabulary(&tickets, &pipeline);
        assert_eq!(vocab.terms(), ["alpha", "beta", "gamma"]);
        assert!(build_vocabulary(&[], &pipeline).is_empty());
        assert_eq!(vocab, build_vocabulary(&tickets, &pipeline));
    }

    #[test]
    fn corpus_rejects_duplicate_ids() {
        let tickets = vec![TicketRecord::new("1", "a b"), TicketRecord::new("1", "c")];
        let err = Corpus::new(
            Schema::default_tickets(),
            tickets,
            TextPipeline::default(),
            Utc::now(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CorpusError::Rejected {
                reason: TicketRejection::DuplicateId { .. },
                ..
            }
        ));
    }

    #[test]
    fn content_hash_ignores_ingest_time() {
        let tickets = vec![TicketRecord::new("1", "printer jam")];
        let a = Corpus::new(
            Schema::default_tickets(),
            tickets.clone(),
            TextPipeline::default(),
            Utc::now(),
        )
        .unwrap();
        let b = Corpus::new(
            Schema::default_tickets(),
            tickets,
            TextPipeline::default(),
            DateTime::<Utc>::UNIX_EPOCH,
        )
        .unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }
}
