//! Inverted tf-idf index with cosine ranking, hierarchical filters, date
//! ranges and four-band similarity categorization.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{indexed_text, Corpus, FieldRole, Vocabulary};
use crate::text::{vectorize, IdfTable, SparseVector, TokenKind, Weighting};

pub const INDEX_MAGIC: &str = "TICKSCOPE-INDEX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    vocabulary: Vocabulary,
    postings: Vec<Vec<Posting>>,
    doc_norms: Vec<f64>,
    idf: IdfTable,
    doc_ids: Vec<String>,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("not an index file (bad magic {0:?})")]
    BadMagic(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("index was built from a different corpus")]
    CorpusMismatch,
    #[error("index io: {0}")]
    Io(#[from] std::io::Error),
    #[error("index encoding: {0}")]
    Encoding(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    magic: String,
    format_version: u32,
    index: InvertedIndex,
}

#[derive(Deserialize)]
struct IndexHeader {
    magic: String,
    format_version: u32,
}

impl InvertedIndex {
    /// Indexes summary (counted twice) plus description of every ticket.
    pub fn build(corpus: &Corpus) -> Result<Self, IndexError> {
        if corpus.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let vocabulary = corpus.vocabulary().clone();
        let docs: Vec<Vec<u32>> = corpus
            .tickets()
            .iter()
            .map(|t| {
                corpus
                    .pipeline()
                    .terms(&indexed_text(t))
                    .iter()
                    .filter_map(|term| vocabulary.id(term))
                    .collect()
            })
            .collect();
        let idf = IdfTable::from_documents(vocabulary.len(), docs.iter().map(Vec::as_slice));

        let mut postings = vec![Vec::new(); vocabulary.len()];
        let mut doc_norms = Vec::with_capacity(docs.len());
        for (d, ids) in docs.iter().enumerate() {
            let tf = SparseVector::from_pairs(ids.iter().map(|&id| (id, 1.0)).collect());
            let mut norm_sq = 0.0;
            for &(id, count) in tf.entries() {
                postings[id as usize].push(Posting {
                    doc: d as u32,
                    tf: count as u32,
                });
                let w = count * idf.idf(id);
                norm_sq += w * w;
            }
            doc_norms.push(norm_sq.sqrt());
        }

        Ok(Self {
            vocabulary,
            postings,
            doc_norms,
            idf,
            doc_ids: corpus.tickets().iter().map(|t| t.id.clone()).collect(),
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    pub fn postings(&self, term: u32) -> &[Posting] {
        self.postings
            .get(term as usize)
            .map_or(&[][..], Vec::as_slice)
    }

    /// Euclidean norm of a document's tf-idf vector. Zero when every term of
    /// the document occurs in all documents.
    pub fn doc_norm(&self, doc: usize) -> f64 {
        self.doc_norms[doc]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// tf-idf vector of an arbitrary text under this index's idf table.
    pub fn query_vector(&self, corpus: &Corpus, text: &str) -> SparseVector {
        vectorize(
            corpus.pipeline().terms(text),
            &self.vocabulary,
            Weighting::TfIdf,
            Some(&self.idf),
        )
        .expect("idf table present")
    }

    /// tf-idf vector of an indexed document, reconstructed from postings.
    pub fn doc_vector(&self, doc: usize) -> SparseVector {
        let mut pairs = Vec::new();
        for (term, list) in self.postings.iter().enumerate() {
            if let Ok(pos) = list.binary_search_by_key(&(doc as u32), |p| p.doc) {
                pairs.push((term as u32, list[pos].tf as f64 * self.idf.idf(term as u32)));
            }
        }
        SparseVector::from_pairs(pairs)
    }

    fn check_corpus(&self, corpus: &Corpus) -> Result<(), IndexError> {
        let same = corpus.len() == self.doc_ids.len()
            && corpus
                .tickets()
                .iter()
                .zip(&self.doc_ids)
                .all(|(t, id)| t.id == *id);
        if same {
            Ok(())
        } else {
            Err(IndexError::CorpusMismatch)
        }
    }

    /// Writes the index with its magic header and format version.
    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), IndexError> {
        let file = IndexFile {
            magic: INDEX_MAGIC.to_string(),
            format_version: INDEX_FORMAT_VERSION,
            index: self.clone(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self, IndexError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let header: IndexHeader = serde_json::from_slice(bytes)?;
        if header.magic != INDEX_MAGIC {
            return Err(IndexError::BadMagic(header.magic));
        }
        if header.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                found: header.format_version,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let file: IndexFile = serde_json::from_slice(bytes)?;
        Ok(file.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    DuplicateLikely,
    StronglyRelated,
    Related,
    Weak,
}

impl Band {
    pub const ALL: [Band; 4] = [
        Band::DuplicateLikely,
        Band::StronglyRelated,
        Band::Related,
        Band::Weak,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ThresholdError {
    #[error("thresholds must satisfy 1 > t1 > t2 > t3 > 0 (got {0}, {1}, {2})")]
    MalformedThresholds(String, String, String),
}

/// Lower score bounds of the duplicate-likely, strongly-related and related
/// bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholds", into = "RawThresholds")]
pub struct Thresholds {
    duplicate: f64,
    strong: f64,
    related: f64,
}

#[derive(Serialize, Deserialize)]
struct RawThresholds {
    duplicate_likely: f64,
    strongly_related: f64,
    related: f64,
}

impl TryFrom<RawThresholds> for Thresholds {
    type Error = ThresholdError;

    fn try_from(raw: RawThresholds) -> Result<Self, Self::Error> {
        Thresholds::new(raw.duplicate_likely, raw.strongly_related, raw.related)
    }
}

impl From<Thresholds> for RawThresholds {
    fn from(t: Thresholds) -> Self {
        RawThresholds {
            duplicate_likely: t.duplicate,
            strongly_related: t.strong,
            related: t.related,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            duplicate: 0.80,
            strong: 0.60,
            related: 0.40,
        }
    }
}

impl Thresholds {
    pub fn new(duplicate: f64, strong: f64, related: f64) -> Result<Self, ThresholdError> {
        let ok = duplicate < 1.0 && duplicate > strong && strong > related && related > 0.0;
        if !ok {
            return Err(ThresholdError::MalformedThresholds(
                duplicate.to_string(),
                strong.to_string(),
                related.to_string(),
            ));
        }
        Ok(Self {
            duplicate,
            strong,
            related,
        })
    }

    pub fn duplicate_likely(&self) -> f64 {
        self.duplicate
    }

    pub fn strongly_related(&self) -> f64 {
        self.strong
    }

    pub fn related(&self) -> f64 {
        self.related
    }
}

/// Lower bounds are inclusive: a score equal to a threshold lands in the
/// higher band.
pub fn categorize_similarity(score: f64, thresholds: &Thresholds) -> Band {
    if score >= thresholds.duplicate {
        Band::DuplicateLikely
    } else if score >= thresholds.strong {
        Band::StronglyRelated
    } else if score >= thresholds.related {
        Band::Related
    } else {
        Band::Weak
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
}

impl DateRange {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.from <= t && t <= self.to
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    /// `(field, value)` pairs in filter-level order.
    #[serde(default)]
    pub filters: Vec<(String, String)>,
    #[serde(default)]
    pub date_range: Option<DateRange>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    20
}

impl Query {
    pub fn new(text: impl Into<String>, k: usize) -> Self {
        Self {
            text: text.into(),
            filters: Vec::new(),
            date_range: None,
            k,
        }
    }

    pub fn filter(mut self, field: &str, value: &str) -> Self {
        self.filters.push((field.to_string(), value.to_string()));
        self
    }

    pub fn between(mut self, from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        self.date_range = Some(DateRange { from, to });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub ticket_id: String,
    pub score: f64,
    pub band: Band,
    pub matched_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum SearchError {
    #[error("query text is empty")]
    EmptyText,
    #[error("{field:?} is not a filter field")]
    UnknownFilterField { field: String },
    #[error("filter {field:?} (level {level}) is out of hierarchy order")]
    FilterOutOfOrder { field: String, level: u32 },
    #[error("date range starts after it ends")]
    InvalidDateRange,
    #[error("ticket {id:?} is not indexed")]
    UnknownTicket { id: String },
    #[error("index was built from a different corpus")]
    CorpusMismatch,
}

impl SearchError {
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::EmptyText => Some("text"),
            Self::UnknownFilterField { field } | Self::FilterOutOfOrder { field, .. } => {
                Some(field)
            }
            Self::InvalidDateRange => Some("date_range"),
            Self::UnknownTicket { .. } => Some("ticket_id"),
            Self::CorpusMismatch => None,
        }
    }
}

/// Documents that pass every filter and the date range, as a bitmap over
/// doc ordinals.
pub fn candidate_mask(corpus: &Corpus, query: &Query) -> Result<Vec<bool>, SearchError> {
    let mut last_level = 0;
    for (field, _) in &query.filters {
        let schema_field = corpus
            .schema()
            .field(field)
            .filter(|f| f.role == FieldRole::Filter)
            .ok_or_else(|| SearchError::UnknownFilterField {
                field: field.clone(),
            })?;
        if schema_field.filter_level <= last_level {
            return Err(SearchError::FilterOutOfOrder {
                field: field.clone(),
                level: schema_field.filter_level,
            });
        }
        last_level = schema_field.filter_level;
    }
    if let Some(range) = &query.date_range {
        if range.from > range.to {
            return Err(SearchError::InvalidDateRange);
        }
    }
    Ok(corpus
        .tickets()
        .iter()
        .map(|t| {
            let filters_pass = query
                .filters
                .iter()
                .all(|(field, value)| t.field_value(field) == Some(value.as_str()));
            let date_pass = match &query.date_range {
                None => true,
                Some(range) => t.created_date.is_some_and(|d| range.contains(d)),
            };
            filters_pass && date_pass
        })
        .collect())
}

/// Ranks candidate tickets by cosine similarity to the query text. Only
/// tickets sharing at least one weighted term are returned; ties are broken
/// by ticket id.
pub fn search(
    index: &InvertedIndex,
    corpus: &Corpus,
    query: &Query,
    thresholds: &Thresholds,
) -> Result<Vec<SearchHit>, SearchError> {
    if query.text.trim().is_empty() {
        return Err(SearchError::EmptyText);
    }
    index
        .check_corpus(corpus)
        .map_err(|_| SearchError::CorpusMismatch)?;
    let mask = candidate_mask(corpus, query)?;
    let q = index.query_vector(corpus, &query.text);
    let q_norm = q.norm();
    if q_norm == 0.0 {
        return Ok(Vec::new());
    }

    let mut dots = vec![0.0f64; index.doc_count()];
    for &(term, qw) in q.entries() {
        let idf = index.idf.idf(term);
        for p in index.postings(term) {
            if mask[p.doc as usize] {
                dots[p.doc as usize] += qw * p.tf as f64 * idf;
            }
        }
    }

    let mut scored: Vec<(usize, f64)> = dots
        .iter()
        .enumerate()
        .filter(|&(d, &dot)| dot > 0.0 && index.doc_norms[d] > 0.0)
        .map(|(d, &dot)| (d, (dot / (q_norm * index.doc_norms[d])).min(1.0)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| index.doc_ids[a.0].cmp(&index.doc_ids[b.0]))
    });
    scored.truncate(query.k);

    Ok(scored
        .into_iter()
        .map(|(d, score)| {
            let matched_terms = shared_terms(index, &q, d);
            SearchHit {
                ticket_id: index.doc_ids[d].clone(),
                score,
                band: categorize_similarity(score, thresholds),
                matched_terms,
            }
        })
        .collect())
}

fn shared_terms(index: &InvertedIndex, q: &SparseVector, doc: usize) -> Vec<String> {
    let mut terms: Vec<(String, f64)> = q
        .entries()
        .iter()
        .filter_map(|&(term, qw)| {
            let list = index.postings(term);
            list.binary_search_by_key(&(doc as u32), |p| p.doc)
                .ok()
                .map(|pos| {
                    let contribution = qw * list[pos].tf as f64 * index.idf.idf(term);
                    (index.vocabulary.term(term).unwrap_or("").to_string(), contribution)
                })
        })
        .collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    terms.into_iter().map(|(t, _)| t).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub term: String,
    pub query_weight: f64,
    pub doc_weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitExplanation {
    pub ticket_id: String,
    pub score: f64,
    pub query_norm: f64,
    pub doc_norm: f64,
    /// Additive parts of the dot product, largest first.
    pub contributions: Vec<TermContribution>,
    /// Code terms present in only one of query and ticket.
    pub code_term_mismatches: Vec<String>,
}

/// Breaks a query/ticket score into per-term dot-product contributions.
pub fn explain_hit(
    index: &InvertedIndex,
    corpus: &Corpus,
    query: &Query,
    ticket_id: &str,
) -> Result<HitExplanation, SearchError> {
    index
        .check_corpus(corpus)
        .map_err(|_| SearchError::CorpusMismatch)?;
    let doc = corpus
        .position(ticket_id)
        .ok_or_else(|| SearchError::UnknownTicket {
            id: ticket_id.to_string(),
        })?;
    let q = index.query_vector(corpus, &query.text);
    let d = index.doc_vector(doc);
    let mut contributions: Vec<TermContribution> = q
        .entries()
        .iter()
        .filter_map(|&(term, qw)| {
            let dw = d.get(term);
            (dw != 0.0).then(|| TermContribution {
                term: index.vocabulary.term(term).unwrap_or("").to_string(),
                query_weight: qw,
                doc_weight: dw,
                contribution: qw * dw,
            })
        })
        .collect();
    contributions.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then_with(|| a.term.cmp(&b.term))
    });

    let code_terms = |text: &str| -> BTreeSet<String> {
        corpus
            .pipeline()
            .tokenize(text)
            .into_iter()
            .filter(|t| t.kind == TokenKind::CodeTerm)
            .map(|t| t.normalized)
            .collect()
    };
    let in_query = code_terms(&query.text);
    let in_doc = code_terms(&indexed_text(&corpus.tickets()[doc]));
    let code_term_mismatches = in_query
        .symmetric_difference(&in_doc)
        .cloned()
        .collect();

    let query_norm = q.norm();
    let doc_norm = index.doc_norms[doc];
    Ok(HitExplanation {
        ticket_id: ticket_id.to_string(),
        score: q.cosine(&d),
        query_norm,
        doc_norm,
        contributions,
        code_term_mismatches,
    })
}
