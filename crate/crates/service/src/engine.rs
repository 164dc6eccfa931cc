//! Stateful operations behind both the HTTP API and the CLI.
//!
//! The engine owns the store, the active field schema and the latest
//! corpus snapshot (corpus, index and live classifiers with the feedback
//! log replayed onto them).

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use tickscope_core::classify::{
    predict_with_kernel, replay_feedback, train, ClassifierModel, FeatureSpace, FeedbackEvent, KernelConfig,
    Recommendation, TargetField, TrainConfig,
};
use tickscope_core::eval::{
    correlation_study, cross_validate, precision_at_k, CorrelationStudy, CvReport, Judgments, PrecisionAtK,
    QueryCounts, DEFAULT_FOLDS,
};
use tickscope_core::index::{explain_hit, search, DateRange, HitExplanation, InvertedIndex, Query, SearchHit, Thresholds};
use tickscope_core::ingest::{ingest, IngestConfig, IngestReport};
use tickscope_core::model::{validate_schema, Corpus, FieldSchema, Schema, TicketRecord};
use tickscope_core::store::{ArtifactKind, Store, StoreVersion};
use tickscope_core::themes::{
    mine_themes, pair_evidence, LdaConfig, LsaCentrality, PhraseCorpus, ThemeConfig, ThemeMethod,
    ThemePairEvidence, ThemeReport,
};

use crate::error::{schema_error, ApiError};
use crate::settings::Settings;

pub const FIELDS_FILE: &str = "fields.json";
pub const TARGETS: [TargetField; 2] = [TargetField::Assignee, TargetField::BusinessProcess];

/// Every successful response: the versions it was computed on, the band
/// thresholds in force and the operation's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub corpus_version: Option<u64>,
    pub model_version: BTreeMap<String, u64>,
    pub thresholds: Thresholds,
    pub result: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldsUpdate {
    List(Vec<FieldSchema>),
    WithStatuses {
        fields: Vec<FieldSchema>,
        #[serde(default)]
        statuses: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(flatten)]
    pub query: Query,
    #[serde(default = "yes")]
    pub explain: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub explanations: Vec<HitExplanation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    #[default]
    Linear,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendRequest {
    /// When set and present in the corpus, its text is used if none is given.
    pub ticket_id: Option<String>,
    pub summary: String,
    pub description: String,
    pub recency: Option<DateRange>,
    pub learner: Learner,
    pub k: Option<usize>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub event_id: String,
    pub target_field: TargetField,
    pub model_version: u64,
    pub log_length: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ThemesRequest {
    pub method: Option<ThemeMethod>,
    pub seed: Option<u64>,
    pub top_n: Option<usize>,
    pub coverage_target: Option<f64>,
    pub lsa_rank: Option<usize>,
    pub lsa_centrality: Option<LsaCentrality>,
    pub lda: Option<LdaConfig>,
    pub tag_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CvRequest {
    pub target: Option<TargetField>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecisionRequest {
    pub k: usize,
    /// `query, ticket, judgment` lines.
    pub judgments: Option<String>,
    pub counts: Option<Vec<QueryCounts>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationRequest {
    pub target: Option<TargetField>,
    pub seed: Option<u64>,
    pub holdout: Vec<String>,
    /// Uses the last `n` tickets in corpus order as holdout.
    pub holdout_last: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub stored: Option<StoreVersion>,
    pub error: Option<ApiError>,
    pub replayed: usize,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub report: IngestReport,
    pub corpus: StoreVersion,
    pub index: StoreVersion,
    pub models: BTreeMap<String, ModelOutcome>,
}

struct Snapshot {
    corpus_version: u64,
    corpus: Corpus,
    index: InvertedIndex,
    models: RwLock<BTreeMap<TargetField, Result<ClassifierModel, ApiError>>>,
    phrases: OnceLock<PhraseCorpus>,
}

impl Snapshot {
    fn model_versions(&self) -> BTreeMap<String, u64> {
        self.models
            .read()
            .unwrap()
            .iter()
            .filter_map(|(t, m)| m.as_ref().ok().map(|m| (t.as_str().to_string(), m.version())))
            .collect()
    }
}

/// Holds the exclusive right to replace the corpus and its models.
pub struct IngestGuard {
    flag: Arc<AtomicBool>,
}

impl Drop for IngestGuard {
    fn drop(&mut self) {
        self.flag.store(false, Ordering::Release);
    }
}

/// A parsed upload waiting for training and persistence.
pub struct PendingIngest {
    corpus: Corpus,
    report: IngestReport,
    seed: u64,
    _guard: IngestGuard,
}

impl PendingIngest {
    pub fn ticket_count(&self) -> usize {
        self.corpus.len()
    }
}

pub struct Engine {
    store: Store,
    settings: Settings,
    schema: RwLock<Schema>,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    ingesting: Arc<AtomicBool>,
    feedback: Mutex<()>,
}

fn model_tag(target: TargetField, corpus_version: u64) -> String {
    format!("{}@corpus-v{corpus_version}", target.as_str())
}

fn index_tag(corpus_version: u64) -> String {
    format!("corpus-v{corpus_version}")
}

impl Engine {
    /// Opens the data directory and restores the latest snapshot, if any.
    pub fn open(settings: Settings) -> Result<Self, ApiError> {
        let store = Store::open(&settings.data_dir)?;
        let schema = match std::fs::read(settings.data_dir.join(FIELDS_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| ApiError::internal(format!("{FIELDS_FILE}: {e}")))?,
            Err(_) => Schema::default_tickets(),
        };
        let engine = Self {
            store,
            settings,
            schema: RwLock::new(schema),
            snapshot: RwLock::new(None),
            ingesting: Arc::new(AtomicBool::new(false)),
            feedback: Mutex::new(()),
        };
        engine.restore()?;
        Ok(engine)
    }

    fn restore(&self) -> Result<(), ApiError> {
        let entry = match self.store.find(ArtifactKind::Corpus, None, None) {
            Ok(e) => e,
            Err(tickscope_core::store::StoreError::UnknownVersion { .. }) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let (_, corpus): (_, Corpus) = self.store.load_json(ArtifactKind::Corpus, Some(entry.version), None)?;
        let index = match self
            .store
            .load_bytes(ArtifactKind::Index, None, Some(&index_tag(entry.version)))
        {
            Ok((_, bytes)) => InvertedIndex::from_bytes(&bytes).map_err(|e| ApiError::internal(e.to_string()))?,
            Err(_) => InvertedIndex::build(&corpus).map_err(|e| ApiError::internal(e.to_string()))?,
        };
        let features = FeatureSpace::new(&corpus);
        let log = self.store.feedback_events()?;
        let mut models = BTreeMap::new();
        for target in TARGETS {
            let loaded = self
                .store
                .load_bytes(ArtifactKind::Model, None, Some(&model_tag(target, entry.version)))
                .map_err(ApiError::from)
                .and_then(|(_, bytes)| Ok(ClassifierModel::from_bytes(&bytes, features.vocab_size())?))
                .and_then(|base| Ok(replay_feedback(&base, &features, &log)?.model));
            models.insert(target, loaded);
        }
        drop(features);
        *self.snapshot.write().unwrap() = Some(Arc::new(Snapshot {
            corpus_version: entry.version,
            corpus,
            index,
            models: RwLock::new(models),
            phrases: OnceLock::new(),
        }));
        Ok(())
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn schema(&self) -> Schema {
        self.schema.read().unwrap().clone()
    }

    pub fn corpus_size(&self) -> Option<usize> {
        self.current().ok().map(|s| s.corpus.len())
    }

    fn current(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.snapshot.read().unwrap().clone().ok_or_else(ApiError::no_corpus)
    }

    fn envelope<T>(&self, snapshot: Option<&Snapshot>, result: T) -> Envelope<T> {
        Envelope {
            corpus_version: snapshot.map(|s| s.corpus_version),
            model_version: snapshot.map(Snapshot::model_versions).unwrap_or_default(),
            thresholds: self.settings.thresholds,
            result,
        }
    }

    /// Validates and stores a new field configuration for later ingests.
    pub fn set_fields(&self, update: FieldsUpdate) -> Result<Envelope<Schema>, ApiError> {
        let (fields, statuses) = match update {
            FieldsUpdate::List(f) => (f, None),
            FieldsUpdate::WithStatuses { fields, statuses } => (fields, statuses),
        };
        let mut schema = validate_schema(&fields).map_err(schema_error)?;
        if let Some(s) = statuses {
            schema = schema.with_statuses(s);
        }
        let bytes = serde_json::to_vec_pretty(&schema).map_err(|e| ApiError::internal(e.to_string()))?;
        let path = self.settings.data_dir.join(FIELDS_FILE);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| ApiError::internal(e.to_string()))?;
        *self.schema.write().unwrap() = schema.clone();
        let snap = self.snapshot.read().unwrap().clone();
        Ok(self.envelope(snap.as_deref(), schema))
    }

    /// Takes the exclusive ingest right, or fails with 409.
    pub fn lock_ingest(&self) -> Result<IngestGuard, ApiError> {
        if self
            .ingesting
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(ApiError::busy("ingest"));
        }
        Ok(IngestGuard {
            flag: self.ingesting.clone(),
        })
    }

    /// Parses an upload under the exclusive ingest right.
    pub fn prepare_ingest(
        &self,
        bytes: &[u8],
        config: &IngestConfig,
        seed: Option<u64>,
    ) -> Result<PendingIngest, ApiError> {
        let seed = seed.ok_or_else(ApiError::missing_seed)?;
        let guard = self.lock_ingest()?;
        let schema = self.schema();
        let pipeline = match self.current() {
            Ok(s) => s.corpus.pipeline().clone(),
            Err(_) => Default::default(),
        };
        let out = ingest(bytes, config, &schema, &pipeline)?;
        Ok(PendingIngest {
            corpus: out.corpus,
            report: out.report,
            seed,
            _guard: guard,
        })
    }

    /// Indexes, trains both classifiers, persists everything and makes the
    /// new corpus current. The feedback log is replayed onto the new models.
    pub fn finish_ingest(&self, pending: PendingIngest) -> Result<Envelope<IngestOutcome>, ApiError> {
        let PendingIngest {
            corpus,
            report,
            seed,
            _guard,
        } = pending;
        let index = InvertedIndex::build(&corpus).map_err(|e| ApiError::new(422, "EmptyCorpus", e.to_string()))?;
        let corpus_entry = self
            .store
            .persist_json(ArtifactKind::Corpus, &corpus, Some(&report.corpus_hash))?;
        let version = corpus_entry.version;
        let index_entry = self
            .store
            .persist_bytes(ArtifactKind::Index, &index.to_bytes(), Some(&index_tag(version)))?;

        let config = TrainConfig::with_seed(seed);
        let mut bases = BTreeMap::new();
        let mut outcomes = BTreeMap::new();
        for target in TARGETS {
            match train(&corpus, target, &config) {
                Ok(model) => {
                    let stored = self.store.persist_bytes(
                        ArtifactKind::Model,
                        &model.to_bytes(),
                        Some(&model_tag(target, version)),
                    )?;
                    outcomes.insert(target, (Some(stored), None));
                    bases.insert(target, Ok(model));
                }
                Err(e) => {
                    let e = ApiError::from(e);
                    outcomes.insert(target, (None, Some(e.clone())));
                    bases.insert(target, Err(e));
                }
            }
        }

        let _serial = self.feedback.lock().unwrap();
        let log = self.store.feedback_events()?;
        let features = FeatureSpace::new(&corpus);
        let mut models = BTreeMap::new();
        let mut model_outcomes = BTreeMap::new();
        for target in TARGETS {
            let (stored, error) = outcomes.remove(&target).unwrap();
            let (live, replayed, skipped) = match bases.remove(&target).unwrap() {
                Ok(base) => {
                    let r = replay_feedback(&base, &features, &log)?;
                    (Ok(r.model), r.applied, r.skipped)
                }
                Err(e) => (Err(e), 0, Vec::new()),
            };
            models.insert(target, live);
            model_outcomes.insert(
                target.as_str().to_string(),
                ModelOutcome {
                    stored,
                    error,
                    replayed,
                    skipped,
                },
            );
        }
        drop(features);
        let snapshot = Arc::new(Snapshot {
            corpus_version: version,
            corpus,
            index,
            models: RwLock::new(models),
            phrases: OnceLock::new(),
        });
        *self.snapshot.write().unwrap() = Some(snapshot.clone());
        Ok(self.envelope(
            Some(&snapshot),
            IngestOutcome {
                report,
                corpus: corpus_entry,
                index: index_entry,
                models: model_outcomes,
            },
        ))
    }

    pub fn ingest_bytes(
        &self,
        bytes: &[u8],
        config: &IngestConfig,
        seed: Option<u64>,
    ) -> Result<Envelope<IngestOutcome>, ApiError> {
        let pending = self.prepare_ingest(bytes, config, seed)?;
        self.finish_ingest(pending)
    }

    pub fn search(&self, request: &SearchRequest) -> Result<Envelope<SearchResult>, ApiError> {
        let snap = self.current()?;
        let hits = search(&snap.index, &snap.corpus, &request.query, &self.settings.thresholds)?;
        let explanations = if request.explain {
            hits.iter()
                .map(|h| explain_hit(&snap.index, &snap.corpus, &request.query, &h.ticket_id))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        Ok(self.envelope(Some(&snap), SearchResult { hits, explanations }))
    }

    fn request_ticket(snap: &Snapshot, request: &RecommendRequest) -> TicketRecord {
        let mut ticket = TicketRecord::new(
            request.ticket_id.clone().unwrap_or_else(|| "query".into()),
            request.summary.clone(),
        );
        ticket.description = request.description.clone();
        if !ticket.has_text() {
            if let Some(known) = request.ticket_id.as_deref().and_then(|id| snap.corpus.ticket(id)) {
                ticket.summary = known.summary.clone();
                ticket.description = known.description.clone();
            }
        }
        ticket
    }

    pub fn recommend(
        &self,
        target: TargetField,
        request: &RecommendRequest,
    ) -> Result<Envelope<Recommendation>, ApiError> {
        let snap = self.current()?;
        let ticket = Self::request_ticket(&snap, request);
        let features = FeatureSpace::new(&snap.corpus);
        let rec = match request.learner {
            Learner::Linear => {
                let models = snap.models.read().unwrap();
                let model = models[&target].as_ref().map_err(|e| {
                    ApiError::new(422, "ModelUnavailable", format!("no {} model: {}", target.as_str(), e.message))
                })?;
                model.predict(&features, &ticket, request.recency.as_ref())?
            }
            Learner::Kernel => {
                let defaults = KernelConfig::default();
                let config = KernelConfig {
                    target_field: target,
                    k: request.k.unwrap_or(defaults.k),
                    gamma: request.gamma.unwrap_or(defaults.gamma),
                    drop_code_terms: defaults.drop_code_terms,
                };
                predict_with_kernel(&config, &features, &ticket)?
            }
        };
        Ok(self.envelope(Some(&snap), rec))
    }

    /// Applies a verdict to the live model and appends it to the log.
    pub fn feedback(&self, event: &FeedbackEvent) -> Result<Envelope<FeedbackAck>, ApiError> {
        let snap = self.current()?;
        let _serial = self.feedback.lock().unwrap();
        let features = FeatureSpace::new(&snap.corpus);
        let next = {
            let models = snap.models.read().unwrap();
            let model = models[&event.target_field].as_ref().map_err(|e| {
                ApiError::new(
                    422,
                    "ModelUnavailable",
                    format!("no {} model: {}", event.target_field.as_str(), e.message),
                )
            })?;
            model.with_feedback(&features, event)?
        };
        let log_length = self.store.append_feedback(event)?;
        let ack = FeedbackAck {
            event_id: event.event_id.clone(),
            target_field: event.target_field,
            model_version: next.version(),
            log_length,
        };
        snap.models.write().unwrap().insert(event.target_field, Ok(next));
        Ok(self.envelope(Some(&snap), ack))
    }

    pub fn theme_config(request: &ThemesRequest) -> Result<(ThemeMethod, ThemeConfig), ApiError> {
        let seed = request.seed.ok_or_else(ApiError::missing_seed)?;
        let defaults = ThemeConfig::default();
        let config = ThemeConfig {
            top_n: request.top_n.unwrap_or(defaults.top_n),
            coverage_target: request.coverage_target.unwrap_or(defaults.coverage_target),
            lsa_rank: request.lsa_rank.unwrap_or(defaults.lsa_rank),
            lsa_centrality: request.lsa_centrality.unwrap_or(defaults.lsa_centrality),
            lda: request.lda.clone().unwrap_or(defaults.lda),
            seed,
            tag_field: request.tag_field.clone(),
        };
        Ok((request.method.unwrap_or(ThemeMethod::LsaTf), config))
    }

    pub fn themes(&self, request: &ThemesRequest) -> Result<Envelope<ThemeReport>, ApiError> {
        let (method, config) = Self::theme_config(request)?;
        let snap = self.current()?;
        let report = mine_themes(&snap.corpus, method, &config)?;
        Ok(self.envelope(Some(&snap), report))
    }

    pub fn theme_pair(&self, p: &str, q: &str) -> Result<Envelope<ThemePairEvidence>, ApiError> {
        let snap = self.current()?;
        let phrases = snap.phrases.get_or_init(|| PhraseCorpus::build(&snap.corpus));
        let evidence = pair_evidence(phrases, p, q)?;
        Ok(self.envelope(Some(&snap), evidence))
    }

    pub fn evaluate_cv(&self, request: &CvRequest) -> Result<Envelope<CvReport>, ApiError> {
        let seed = request.seed.ok_or_else(ApiError::missing_seed)?;
        let snap = self.current()?;
        let mut config = TrainConfig::with_seed(seed);
        if let Some(l) = request.lambda {
            config.lambda = l;
        }
        if let Some(e) = request.epochs {
            config.epochs = e;
        }
        let report = cross_validate(
            &snap.corpus,
            request.target.unwrap_or(TargetField::Assignee),
            request.folds.unwrap_or(DEFAULT_FOLDS),
            &config,
        )?;
        Ok(self.envelope(Some(&snap), report))
    }

    pub fn evaluate_precision(&self, request: &PrecisionRequest) -> Result<Envelope<PrecisionAtK>, ApiError> {
        let result = match (&request.judgments, &request.counts) {
            (Some(text), None) => precision_at_k(&Judgments::parse(text)?, request.k)?,
            (None, Some(counts)) => PrecisionAtK::from_counts(request.k, counts.clone())?,
            _ => {
                return Err(ApiError::malformed("give exactly one of judgments or counts").with_field("judgments"))
            }
        };
        let snap = self.snapshot.read().unwrap().clone();
        Ok(self.envelope(snap.as_deref(), result))
    }

    pub fn evaluate_correlation(&self, request: &CorrelationRequest) -> Result<Envelope<CorrelationStudy>, ApiError> {
        let seed = request.seed.ok_or_else(ApiError::missing_seed)?;
        let snap = self.current()?;
        let holdout: Vec<String> = match request.holdout_last {
            Some(n) => {
                let tickets = snap.corpus.tickets();
                tickets[tickets.len().saturating_sub(n)..].iter().map(|t| t.id.clone()).collect()
            }
            None => request.holdout.clone(),
        };
        let study = correlation_study(
            &snap.corpus,
            request.target.unwrap_or(TargetField::Assignee),
            &holdout,
            &TrainConfig::with_seed(seed),
        )?;
        Ok(self.envelope(Some(&snap), study))
    }

    pub fn versions(&self) -> Result<Envelope<Vec<StoreVersion>>, ApiError> {
        let versions = self.store.versions(None)?;
        let snap = self.snapshot.read().unwrap().clone();
        Ok(self.envelope(snap.as_deref(), versions))
    }

    /// Feedback event with the text of a corpus ticket filled in.
    pub fn ticket_text(&self, id: &str) -> Option<(String, String)> {
        let snap = self.current().ok()?;
        snap.corpus
            .ticket(id)
            .map(|t| (t.summary.clone(), t.description.clone()))
    }
}
