//! Column-mapped ingestion of delimited ticket exports.
//!
//! Rows that cannot become valid tickets are quarantined with their row
//! number and reason; they are never dropped silently.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    fields, validate_schema, validate_ticket, Corpus, FieldKind, Schema, SchemaViolation,
    TicketRecord, TicketRejection,
};
use crate::text::TextPipeline;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Name of the sheet or export the rows came from.
    pub source_label: String,
    pub delimiter: char,
    /// Without a header, column mappings are 1-based column numbers.
    pub has_header: bool,
    /// Overrides the created-date format of the schema.
    pub datetime_format: Option<String>,
    /// Field name → column, taking precedence over the schema mapping.
    pub column_overrides: BTreeMap<String, String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            source_label: "tickets".into(),
            delimiter: ',',
            has_header: true,
            datetime_format: None,
            column_overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "code")]
pub enum IngestError {
    #[error("cannot read source: {detail}")]
    UnreadableSource { detail: String },
    #[error("column {column:?} mapped by field {field:?} is not in the header")]
    MissingColumn { field: String, column: String },
    #[error("every one of {quarantined} data rows was quarantined")]
    EmptyAfterQuarantine { quarantined: usize },
    #[error("schema with overrides is invalid: {violations:?}")]
    InvalidSchema { violations: Vec<SchemaViolation> },
    #[error("delimiter {delimiter:?} is not a single-byte character")]
    BadDelimiter { delimiter: char },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedRow {
    /// 1-based data row (header excluded).
    pub row: usize,
    /// Source line the record starts on.
    pub line: u64,
    pub ticket_id: Option<String>,
    pub reason: TicketRejection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source_label: String,
    pub data_rows: usize,
    pub accepted: usize,
    pub quarantined: Vec<QuarantinedRow>,
    pub corpus_hash: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub report: IngestReport,
}

pub fn ingest_file(
    path: impl AsRef<Path>,
    config: &IngestConfig,
    schema: &Schema,
    pipeline: &TextPipeline,
) -> Result<Ingested, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::UnreadableSource {
        detail: format!("{}: {e}", path.display()),
    })?;
    ingest(file, config, schema, pipeline)
}

/// Parses delimited UTF-8 text into a corpus under `schema`.
pub fn ingest<R: Read>(
    source: R,
    config: &IngestConfig,
    schema: &Schema,
    pipeline: &TextPipeline,
) -> Result<Ingested, IngestError> {
    let schema = apply_overrides(schema, config)?;
    let delimiter = u8::try_from(config.delimiter)
        .ok()
        .filter(u8::is_ascii)
        .ok_or(IngestError::BadDelimiter {
            delimiter: config.delimiter,
        })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.byte_records();

    let header: Option<Vec<String>> = if config.has_header {
        match records.next() {
            Some(Ok(rec)) => Some(
                rec.iter()
                    .map(|f| String::from_utf8_lossy(f).trim().trim_start_matches('\u{feff}').to_string())
                    .collect(),
            ),
            Some(Err(e)) => return Err(IngestError::UnreadableSource { detail: e.to_string() }),
            None => {
                return Err(IngestError::UnreadableSource {
                    detail: "source is empty, header row expected".into(),
                })
            }
        }
    } else {
        None
    };
    let columns = resolve_columns(&schema, header.as_deref())?;
    let width = header.as_ref().map(Vec::len);

    let mut tickets = Vec::new();
    let mut quarantined = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut data_rows = 0;
    for (n, result) in records.enumerate() {
        data_rows += 1;
        let row = n + 1;
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                quarantined.push(QuarantinedRow {
                    row,
                    line,
                    ticket_id: None,
                    reason: TicketRejection::MalformedRow {
                        detail: e.to_string(),
                    },
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let mut reject = |ticket_id: Option<String>, reason| {
            quarantined.push(QuarantinedRow {
                row,
                line,
                ticket_id,
                reason,
            })
        };
        if let Some(w) = width {
            if record.len() != w {
                reject(
                    None,
                    TicketRejection::MalformedRow {
                        detail: format!("{} fields, header has {w}", record.len()),
                    },
                );
                continue;
            }
        }
        let mut values = Vec::with_capacity(record.len());
        let mut bad_utf8 = None;
        for (i, f) in record.iter().enumerate() {
            match std::str::from_utf8(f) {
                Ok(s) => values.push(s.trim().to_string()),
                Err(_) => {
                    bad_utf8 = Some(i + 1);
                    break;
                }
            }
        }
        if let Some(col) = bad_utf8 {
            reject(
                None,
                TicketRejection::MalformedRow {
                    detail: format!("column {col} is not valid UTF-8"),
                },
            );
            continue;
        }
        match build_ticket(&schema, &columns, &values, config) {
            Err(reason) => {
                let id = columns
                    .get(fields::ID)
                    .and_then(|&c| values.get(c))
                    .filter(|s| !s.is_empty())
                    .cloned();
                reject(id, reason);
            }
            Ok(ticket) => {
                if let Err(reason) = validate_ticket(&ticket, &schema) {
                    reject(Some(ticket.id.clone()).filter(|s| !s.is_empty()), reason);
                } else if !seen.insert(ticket.id.clone()) {
                    let id = ticket.id.clone();
                    reject(Some(id.clone()), TicketRejection::DuplicateId { id });
                } else {
                    tickets.push(ticket);
                }
            }
        }
    }

    if tickets.is_empty() {
        return Err(IngestError::EmptyAfterQuarantine {
            quarantined: quarantined.len(),
        });
    }
    let accepted = tickets.len();
    let corpus = Corpus::new(schema, tickets, pipeline.clone(), Utc::now())
        .expect("rows were validated individually");
    let report = IngestReport {
        source_label: config.source_label.clone(),
        data_rows,
        accepted,
        quarantined,
        corpus_hash: corpus.content_hash().0,
    };
    Ok(Ingested { corpus, report })
}

fn apply_overrides(schema: &Schema, config: &IngestConfig) -> Result<Schema, IngestError> {
    if config.column_overrides.is_empty() && config.datetime_format.is_none() {
        return Ok(schema.clone());
    }
    let mut fields = schema.fields().to_vec();
    for f in &mut fields {
        if let Some(col) = config.column_overrides.get(&f.name) {
            f.column_mapping = col.clone();
        }
        if f.name == fields::CREATED_DATE {
            if let Some(fmt) = &config.datetime_format {
                f.datetime_format = Some(fmt.clone());
            }
        }
    }
    for name in config.column_overrides.keys() {
        if schema.field(name).is_none() {
            return Err(IngestError::MissingColumn {
                field: name.clone(),
                column: config.column_overrides[name].clone(),
            });
        }
    }
    validate_schema(&fields)
        .map(|s| s.with_statuses(schema.statuses().to_vec()))
        .map_err(|violations| IngestError::InvalidSchema { violations })
}

/// Field name → column position.
fn resolve_columns(
    schema: &Schema,
    header: Option<&[String]>,
) -> Result<HashMap<String, usize>, IngestError> {
    let mut out = HashMap::new();
    for f in schema.fields() {
        let missing = || IngestError::MissingColumn {
            field: f.name.clone(),
            column: f.column_mapping.clone(),
        };
        let pos = match header {
            Some(h) => h
                .iter()
                .position(|c| *c == f.column_mapping.trim())
                .or_else(|| {
                    h.iter()
                        .position(|c| c.eq_ignore_ascii_case(f.column_mapping.trim()))
                })
                .ok_or_else(missing)?,
            None => f
                .column_mapping
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .map(|n| n - 1)
                .ok_or_else(missing)?,
        };
        out.insert(f.name.clone(), pos);
    }
    Ok(out)
}

fn build_ticket(
    schema: &Schema,
    columns: &HashMap<String, usize>,
    values: &[String],
    config: &IngestConfig,
) -> Result<TicketRecord, TicketRejection> {
    let mut ticket = TicketRecord::default();
    for f in schema.fields() {
        let value = values
            .get(columns[&f.name])
            .cloned()
            .ok_or_else(|| TicketRejection::MalformedRow {
                detail: format!("missing column for field {:?}", f.name),
            })?;
        match f.name.as_str() {
            fields::ID => ticket.id = value,
            fields::SUMMARY => ticket.summary = value,
            fields::DESCRIPTION => ticket.description = value,
            fields::ASSIGNEE => ticket.assignee = value,
            fields::BUSINESS_PROCESS => ticket.business_process = value,
            fields::MODULE_TAG => ticket.module_tag = value,
            fields::PRIORITY => ticket.priority = value,
            fields::STATUS => ticket.status = value,
            fields::CREATED_DATE => {
                if !value.is_empty() {
                    let format = config
                        .datetime_format
                        .as_deref()
                        .or(f.datetime_format.as_deref())
                        .unwrap_or(DEFAULT_DATETIME_FORMAT);
                    ticket.created_date = Some(parse_datetime(&value, format).ok_or_else(|| {
                        TicketRejection::BadDate {
                            value: value.clone(),
                            format: format.to_string(),
                        }
                    })?);
                }
            }
            _ if f.kind == FieldKind::Custom && !value.is_empty() => {
                ticket.custom.insert(f.name.clone(), value);
            }
            _ => {}
        }
    }
    Ok(ticket)
}

pub const DEFAULT_DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Parses with a chrono format string. Formats with an offset keep it;
/// naive date-times and bare dates are taken as UTC.
pub fn parse_datetime(value: &str, format: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_str(value, format) {
        return Some(dt.with_timezone(&Utc));
    }
    if let Ok(naive) = NaiveDateTime::parse_from_str(value, format) {
        return Some(naive.and_utc());
    }
    NaiveDate::parse_from_str(value, format)
        .ok()
        .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "ID,Summary,Description,Assignee,Business Process,Created Date,Module,Priority,Status\n";

    fn run(body: &str) -> Result<Ingested, IngestError> {
        ingest(
            format!("{HEADER}{body}").as_bytes(),
            &IngestConfig::default(),
            &Schema::default_tickets(),
            &TextPipeline::default(),
        )
    }

    #[test]
    fn maps_columns() {
        let out = run("T1,Login fails,\"Error, on submit\",ana,Billing,2024-03-01 10:00:00,CRM,P1,Open\n").unwrap();
        let t = &out.corpus.tickets()[0];
        assert_eq!(t.id, "T1");
        assert_eq!(t.description, "Error, on submit");
        assert_eq!(t.business_process, "Billing");
        assert_eq!(t.module_tag, "CRM");
        assert_eq!(t.created_date.unwrap().to_rfc3339(), "2024-03-01T10:00:00+00:00");
        assert!(out.report.quarantined.is_empty());
    }

    #[test]
    fn quarantines_each_bad_row() {
        let body = "\
T1,ok,,a,b,,M,P,Open
,no id,,a,b,,M,P,Open
T3,,,a,b,,M,P,Open
T4,bad date,,a,b,yesterday,M,P,Open
T5,bad status,,a,b,,M,P,Pending
T1,duplicate,,a,b,,M,P,Open
T7,short row
T8,fine,,a,b,2024-01-02 03:04:05,M,P,
";
        let out = run(body).unwrap();
        let codes: Vec<(usize, &str)> = out
            .report
            .quarantined
            .iter()
            .map(|q| (q.row, q.reason.code()))
            .collect();
        assert_eq!(
            codes,
            [
                (2, "EmptyId"),
                (3, "EmptyText"),
                (4, "BadDate"),
                (5, "BadStatus"),
                (6, "DuplicateId"),
                (7, "MalformedRow")
            ]
        );
        assert_eq!(out.report.data_rows, 8);
        assert_eq!(out.corpus.len() + out.report.quarantined.len(), 8);
        assert_eq!(out.report.quarantined[0].line, 3);
    }

    #[test]
    fn missing_column() {
        let err = ingest(
            "ID,Title\nT1,x\n".as_bytes(),
            &IngestConfig::default(),
            &Schema::default_tickets(),
            &TextPipeline::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "Summary"));
    }

    #[test]
    fn all_rows_bad() {
        assert_eq!(
            run(",,,,,,,,\n").unwrap_err(),
            IngestError::EmptyAfterQuarantine { quarantined: 1 }
        );
    }

    #[test]
    fn unreadable() {
        assert!(matches!(
            ingest_file(
                "/nonexistent/tickets.csv",
                &IngestConfig::default(),
                &Schema::default_tickets(),
                &TextPipeline::default()
            ),
            Err(IngestError::UnreadableSource { .. })
        ));
    }

    #[test]
    fn reingest_is_hash_identical() {
        let body = "T1,Login fails,,ana,Billing,,CRM,P1,Open\nT2,Printer jam,,bo,Ops,,HW,P2,Closed\n";
        assert_eq!(run(body).unwrap().report.corpus_hash, run(body).unwrap().report.corpus_hash);
    }

    #[test]
    fn overrides_and_delimiter() {
        let config = IngestConfig {
            delimiter: ';',
            datetime_format: Some("%d/%m/%Y".into()),
            column_overrides: BTreeMap::from([("summary".to_string(), "Title".to_string())]),
            ..IngestConfig::default()
        };
        let text = "ID;Title;Description;Assignee;Business Process;Created Date;Module;Priority;Status\nT1;Disk full;;ops;Infra;05/02/2024;HW;P3;Open\n";
        let out = ingest(
            text.as_bytes(),
            &config,
            &Schema::default_tickets(),
            &TextPipeline::default(),
        )
        .unwrap();
        let t = &out.corpus.tickets()[0];
        assert_eq!(t.summary, "Disk full");
        assert_eq!(t.created_date.unwrap().to_rfc3339(), "2024-02-05T00:00:00+00:00");
    }

    #[test]
    fn headerless_uses_column_numbers() {
        let fields = vec![
            crate::model::FieldSchema::information(fields::ID, "1"),
            crate::model::FieldSchema::information(fields::SUMMARY, "3"),
        ];
        let schema = validate_schema(&fields).unwrap();
        let config = IngestConfig {
            has_header: false,
            ..IngestConfig::default()
        };
        let out = ingest(
            "A,ignored,first ticket\nB,ignored,second ticket\n".as_bytes(),
            &config,
            &schema,
            &TextPipeline::default(),
        )
        .unwrap();
        assert_eq!(out.corpus.tickets()[1].summary, "second ticket");
    }
}
