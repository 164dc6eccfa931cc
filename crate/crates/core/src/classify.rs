//! One-vs-rest linear max-margin classifiers for assignee and
//! business-process recommendation, incremental accept/reject feedback, and
//! a kernel-weighted nearest-neighbour mode.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::DateRange;
use crate::model::{indexed_text, indexed_text_of, Corpus, TicketRecord};
use crate::text::{vectorize, IdfTable, SparseVector, TokenKind, Weighting};

pub const MODEL_MAGIC: &str = "TICKSCOPE-MODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MIN_TRAINING_EXAMPLES: usize = 10;
pub const LINEAR_LEARNER: &str =
    "linear one-vs-rest SVM (hinge loss, L2, stochastic subgradient); stands in for a Gaussian-kernel SVM";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetField {
    Assignee,
    BusinessProcess,
}

impl TargetField {
    pub fn label_of<'a>(&self, ticket: &'a TicketRecord) -> &'a str {
        match self {
            TargetField::Assignee => &ticket.assignee,
            TargetField::BusinessProcess => &ticket.business_process,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TargetField::Assignee => "assignee",
            TargetField::BusinessProcess => "business_process",
        }
    }
}

impl std::str::FromStr for TargetField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "assignee" => Ok(Self::Assignee),
            "business_process" | "business-process" => Ok(Self::BusinessProcess),
            other => Err(format!("unknown target field {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// L2 regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Step size for accept/reject feedback boosts.
    pub feedback_rate: f64,
    /// Ignore code-term tokens when building features.
    pub drop_code_terms: bool,
    /// Skip tickets whose description is mostly code terms.
    pub exclude_code_dominated: bool,
    pub code_dominated_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            seed: 0,
            feedback_rate: 0.1,
            drop_code_terms: false,
            exclude_code_dominated: false,
            code_dominated_ratio: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "code")]
pub enum ClassifyError {
    #[error("need at least 2 distinct labels, found {found}")]
    TooFewLabels { found: usize },
    #[error("need at least {required} labeled tickets, found {found}")]
    TooFewExamples { found: usize, required: usize },
    #[error("ticket has no text")]
    EmptyText,
    #[error("label {label:?} is not known to the model")]
    UnknownLabel { label: String },
    #[error("feedback event {event_id:?} was already applied")]
    DuplicateEventId { event_id: String },
    #[error("event targets {found:?} but the model predicts {expected:?}")]
    TargetMismatch {
        expected: TargetField,
        found: TargetField,
    },
    #[error("kernel bandwidth must be positive and finite")]
    BadBandwidth,
    #[error("neighbour count must be at least 1")]
    BadNeighbourCount,
    #[error("model expects a vocabulary of {expected} terms, corpus has {found}")]
    VocabularyMismatch { expected: usize, found: usize },
    #[error("invalid training configuration: {detail}")]
    BadConfig { detail: String },
    #[error("model file: {detail}")]
    BadModelFile { detail: String },
}

/// tf-idf feature space of a corpus: its vocabulary, idf table and text
/// pipeline.
#[derive(Debug, Clone)]
pub struct FeatureSpace<'a> {
    corpus: &'a Corpus,
    idf: IdfTable,
}

impl<'a> FeatureSpace<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        let vocab = corpus.vocabulary();
        let docs: Vec<Vec<u32>> = corpus
            .tickets()
            .iter()
            .map(|t| {
                corpus
                    .pipeline()
                    .terms(&indexed_text(t))
                    .iter()
                    .filter_map(|term| vocab.id(term))
                    .collect()
            })
            .collect();
        let idf = IdfTable::from_documents(vocab.len(), docs.iter().map(Vec::as_slice));
        Self { corpus, idf }
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    pub fn vocab_size(&self) -> usize {
        self.corpus.vocabulary().len()
    }

    /// Unit-length tf-idf vector of a ticket's indexed text.
    pub fn featurize(&self, summary: &str, description: &str, drop_code_terms: bool) -> SparseVector {
        let text = indexed_text_of(summary, description);
        let terms = self
            .corpus
            .pipeline()
            .tokenize(&text)
            .into_iter()
            .filter(|t| !(drop_code_terms && t.kind == TokenKind::CodeTerm))
            .map(|t| t.normalized);
        vectorize(
            terms,
            self.corpus.vocabulary(),
            Weighting::TfIdf,
            Some(&self.idf),
        )
        .expect("idf table present")
        .normalized()
    }

    pub fn featurize_ticket(&self, ticket: &TicketRecord, drop_code_terms: bool) -> SparseVector {
        self.featurize(&ticket.summary, &ticket.description, drop_code_terms)
    }
}

/// Fraction of description tokens that are code terms.
pub fn code_term_ratio(corpus: &Corpus, ticket: &TicketRecord) -> f64 {
    let tokens = corpus.pipeline().tokenize(&ticket.description);
    if tokens.is_empty() {
        return 0.0;
    }
    let codes = tokens
        .iter()
        .filter(|t| t.kind == TokenKind::CodeTerm)
        .count();
    codes as f64 / tokens.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub event_id: String,
    pub ticket_id: String,
    pub target_field: TargetField,
    pub label: String,
    pub verdict: Verdict,
    /// Text the recommendation was made for; features are recomputed from it.
    pub summary: String,
    #[serde(default)]
    pub description: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLabel {
    pub label: String,
    pub score: f64,
    /// Ranked below every in-range label by the recency filter.
    #[serde(default)]
    pub demoted: bool,
}

/// Labels ranked best first. Scores are non-increasing within the
/// non-demoted prefix and within the demoted suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub ranked: Vec<RankedLabel>,
    pub model_version: Option<u64>,
    pub recency_filter: Option<DateRange>,
    pub learner: String,
}

impl Recommendation {
    pub fn top(&self) -> Option<&str> {
        self.ranked.first().map(|r| r.label.as_str())
    }

    pub fn score_of(&self, label: &str) -> Option<f64> {
        self.ranked
            .iter()
            .find(|r| r.label == label)
            .map(|r| r.score)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.ranked.iter().map(|r| r.label.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    target_field: TargetField,
    labels: Vec<String>,
    /// One dense row of `vocab_size` weights per label.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    #[serde(with = "boost_triples")]
    feedback_boost: BTreeMap<(u32, u32), f64>,
    /// Sorted creation timestamps (seconds) of each label's training tickets.
    label_dates: Vec<Vec<i64>>,
    label_counts: Vec<usize>,
    vocab_size: usize,
    trained_at: DateTime<Utc>,
    training_config: TrainConfig,
    learner: String,
    version: u64,
    applied_events: BTreeSet<String>,
}

mod boost_triples {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Triple {
        term: u32,
        label: u32,
        boost: f64,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(u32, u32), f64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let triples: Vec<Triple> = map
            .iter()
            .map(|(&(term, label), &boost)| Triple { term, label, boost })
            .collect();
        triples.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(u32, u32), f64>, D::Error> {
        let triples = Vec::<Triple>::deserialize(d)?;
        Ok(triples
            .into_iter()
            .map(|t| ((t.term, t.label), t.boost))
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    format_version: u32,
    model: ClassifierModel,
}

/// Corpus ordinals among `indices` that carry a `target` label and pass the
/// code-term filter of `config`.
pub fn labeled_examples(
    corpus: &Corpus,
    indices: &[usize],
    target: TargetField,
    config: &TrainConfig,
) -> Vec<usize> {
    indices
        .iter()
        .copied()
        .filter(|&i| {
            let t = &corpus.tickets()[i];
            !target.label_of(t).is_empty()
                && !(config.exclude_code_dominated
                    && code_term_ratio(corpus, t) > config.code_dominated_ratio)
        })
        .collect()
}

/// Trains on every labeled ticket of the corpus.
pub fn train(
    corpus: &Corpus,
    target: TargetField,
    config: &TrainConfig,
) -> Result<ClassifierModel, ClassifyError> {
    let all: Vec<usize> = (0..corpus.len()).collect();
    train_on(&FeatureSpace::new(corpus), &all, target, config)
}

/// Trains on the tickets at `indices` (corpus ordinals).
pub fn train_on(
    features: &FeatureSpace<'_>,
    indices: &[usize],
    target: TargetField,
    config: &TrainConfig,
) -> Result<ClassifierModel, ClassifyError> {
    if !(config.lambda > 0.0 && config.lambda.is_finite()) || config.epochs == 0 {
        return Err(ClassifyError::BadConfig {
            detail: "lambda must be positive and epochs at least 1".into(),
        });
    }
    let corpus = features.corpus();
    let examples = labeled_examples(corpus, indices, target, config);

    let labels: Vec<String> = examples
        .iter()
        .map(|&i| target.label_of(&corpus.tickets()[i]).to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(ClassifyError::TooFewLabels {
            found: labels.len(),
        });
    }
    if examples.len() < MIN_TRAINING_EXAMPLES {
        return Err(ClassifyError::TooFewExamples {
            found: examples.len(),
            required: MIN_TRAINING_EXAMPLES,
        });
    }

    let label_index = |name: &str| labels.binary_search_by(|l| l.as_str().cmp(name)).unwrap();
    let xs: Vec<SparseVector> = examples
        .iter()
        .map(|&i| features.featurize_ticket(&corpus.tickets()[i], config.drop_code_terms))
        .collect();
    let ys: Vec<usize> = examples
        .iter()
        .map(|&i| label_index(target.label_of(&corpus.tickets()[i])))
        .collect();

    let mut label_dates = vec![Vec::new(); labels.len()];
    let mut label_counts = vec![0; labels.len()];
    for (&i, &y) in examples.iter().zip(&ys) {
        label_counts[y] += 1;
        if let Some(d) = corpus.tickets()[i].created_date {
            label_dates[y].push(d.timestamp());
        }
    }
    for dates in &mut label_dates {
        dates.sort_unstable();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let orders: Vec<Vec<usize>> = (0..config.epochs)
        .map(|_| {
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect();

    let vocab_size = features.vocab_size();
    let mut weights = Vec::with_capacity(labels.len());
    let mut bias = Vec::with_capacity(labels.len());
    for label in 0..labels.len() {
        let (w, b) = pegasos(&xs, &ys, label, vocab_size, &orders, config.lambda);
        weights.push(w);
        bias.push(b);
    }

    Ok(ClassifierModel {
        target_field: target,
        labels,
        weights,
        bias,
        feedback_boost: BTreeMap::new(),
        label_dates,
        label_counts,
        vocab_size,
        trained_at: Utc::now(),
        training_config: config.clone(),
        learner: LINEAR_LEARNER.to_string(),
        version: 1,
        applied_events: BTreeSet::new(),
    })
}

/// Binary hinge-loss SVM by projected stochastic subgradient descent with
/// step 1/(lambda t). The bias is an extra constant feature. Weights are
/// kept as `scale * v` so the shrink step is O(1).
fn pegasos(
    xs: &[SparseVector],
    ys: &[usize],
    positive: usize,
    dim: usize,
    orders: &[Vec<usize>],
    lambda: f64,
) -> (Vec<f64>, f64) {
    let bias_slot = dim;
    let mut v = vec![0.0f64; dim + 1];
    let mut scale = 1.0f64;
    let mut v_norm_sq = 0.0f64;
    let radius = 1.0 / lambda.sqrt();
    let mut t = 0u64;

    for order in orders {
        for &i in order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let y = if ys[i] == positive { 1.0 } else { -1.0 };
            let x = &xs[i];
            let vx: f64 = x
                .entries()
                .iter()
                .map(|&(id, xv)| v[id as usize] * xv)
                .sum::<f64>()
                + v[bias_slot];
            let violated = y * scale * vx < 1.0;

            let shrink = 1.0 - 1.0 / t as f64;
            if shrink == 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                v_norm_sq = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }

            if violated {
                let c = eta * y / scale;
                // vx is stale after a reset; recompute against zeroed v
                let vx_now = if shrink == 0.0 { 0.0 } else { vx };
                let x_norm_sq = x.entries().iter().map(|(_, xv)| xv * xv).sum::<f64>() + 1.0;
                for &(id, xv) in x.entries() {
                    v[id as usize] += c * xv;
                }
                v[bias_slot] += c;
                v_norm_sq += 2.0 * c * vx_now + c * c * x_norm_sq;
            }

            let norm = scale * v_norm_sq.max(0.0).sqrt();
            if norm > radius {
                scale *= radius / norm;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                v_norm_sq *= scale * scale;
                scale = 1.0;
            }
        }
    }

    let b = v[bias_slot] * scale;
    v.truncate(dim);
    v.iter_mut().for_each(|w| *w *= scale);
    (v, b)
}

impl ClassifierModel {
    pub fn target_field(&self) -> TargetField {
        self.target_field
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_counts(&self) -> &[usize] {
        &self.label_counts
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn trained_at(&self) -> DateTime<Utc> {
        self.trained_at
    }

    pub fn training_config(&self) -> &TrainConfig {
        &self.training_config
    }

    pub fn learner(&self) -> &str {
        &self.learner
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn feedback_boost(&self, term: u32, label: &str) -> f64 {
        self.label_position(label)
            .and_then(|l| self.feedback_boost.get(&(term, l as u32)).copied())
            .unwrap_or(0.0)
    }

    pub fn applied_events(&self) -> &BTreeSet<String> {
        &self.applied_events
    }

    fn label_position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn check_space(&self, features: &FeatureSpace<'_>) -> Result<(), ClassifyError> {
        if features.vocab_size() != self.vocab_size {
            return Err(ClassifyError::VocabularyMismatch {
                expected: self.vocab_size,
                found: features.vocab_size(),
            });
        }
        Ok(())
    }

    /// Per-label decision values `w.x + b + boost.x`.
    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.labels.len())
            .map(|l| {
                let linear: f64 = x
                    .entries()
                    .iter()
                    .map(|&(id, xv)| self.weights[l][id as usize] * xv)
                    .sum();
                let boost: f64 = x
                    .entries()
                    .iter()
                    .filter_map(|&(id, xv)| {
                        self.feedback_boost.get(&(id, l as u32)).map(|b| b * xv)
                    })
                    .sum();
                linear + self.bias[l] + boost
            })
            .collect()
    }

    fn in_range(&self, label: usize, range: &DateRange) -> bool {
        let dates = &self.label_dates[label];
        let from = range.from.timestamp();
        let to = range.to.timestamp();
        let first = dates.partition_point(|&d| d < from);
        first < dates.len() && dates[first] <= to
    }

    /// Ranks every label for a ticket. With a recency range, labels without
    /// a training ticket inside it are moved below all in-range labels.
    pub fn predict(
        &self,
        features: &FeatureSpace<'_>,
        ticket: &TicketRecord,
        recency: Option<&DateRange>,
    ) -> Result<Recommendation, ClassifyError> {
        if !ticket.has_text() {
            return Err(ClassifyError::EmptyText);
        }
        self.check_space(features)?;
        let x = features.featurize_ticket(ticket, self.training_config.drop_code_terms);
        let scores = self.scores(&x);
        let mut ranked: Vec<RankedLabel> = self
            .labels
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(l, (label, &score))| RankedLabel {
                label: label.clone(),
                score,
                demoted: recency.is_some_and(|r| !self.in_range(l, r)),
            })
            .collect();
        ranked.sort_by(|a, b| {
            a.demoted
                .cmp(&b.demoted)
                .then_with(|| b.score.total_cmp(&a.score))
                .then_with(|| a.label.cmp(&b.label))
        });
        Ok(Recommendation {
            ranked,
            model_version: Some(self.version),
            recency_filter: recency.cloned(),
            learner: self.learner.clone(),
        })
    }

    /// Applies one accept/reject verdict with the configured feedback rate.
    pub fn apply_feedback(
        &mut self,
        features: &FeatureSpace<'_>,
        event: &FeedbackEvent,
    ) -> Result<(), ClassifyError> {
        let rate = self.training_config.feedback_rate;
        self.apply_feedback_with_rate(features, event, rate)
    }

    /// Adds `±rate * x_t` to the (term, label) boost of every active feature
    /// term of the event's ticket. Base weights are untouched; an event id is
    /// applied at most once.
    pub fn apply_feedback_with_rate(
        &mut self,
        features: &FeatureSpace<'_>,
        event: &FeedbackEvent,
        rate: f64,
    ) -> Result<(), ClassifyError> {
        if event.target_field != self.target_field {
            return Err(ClassifyError::TargetMismatch {
                expected: self.target_field,
                found: event.target_field,
            });
        }
        let label = self
            .label_position(&event.label)
            .ok_or_else(|| ClassifyError::UnknownLabel {
                label: event.label.clone(),
            })?;
        if self.applied_events.contains(&event.event_id) {
            return Err(ClassifyError::DuplicateEventId {
                event_id: event.event_id.clone(),
            });
        }
        self.check_space(features)?;
        let x = features.featurize(
            &event.summary,
            &event.description,
            self.training_config.drop_code_terms,
        );
        let sign = match event.verdict {
            Verdict::Accepted => 1.0,
            Verdict::Rejected => -1.0,
        };
        for &(term, xv) in x.entries() {
            if xv > 0.0 {
                *self.feedback_boost.entry((term, label as u32)).or_insert(0.0) +=
                    sign * rate * xv;
            }
        }
        self.applied_events.insert(event.event_id.clone());
        self.version += 1;
        Ok(())
    }

    /// Functional form of [`apply_feedback`](Self::apply_feedback).
    pub fn with_feedback(
        &self,
        features: &FeatureSpace<'_>,
        event: &FeedbackEvent,
    ) -> Result<ClassifierModel, ClassifyError> {
        let mut next = self.clone();
        next.apply_feedback(features, event)?;
        Ok(next)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&ModelFile {
            magic: MODEL_MAGIC.to_string(),
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    /// Loads a model snapshot and checks it against the vocabulary size of
    /// the corpus it will be used with.
    pub fn from_bytes(bytes: &[u8], expected_vocab_size: usize) -> Result<Self, ClassifyError> {
        let bad = |detail: String| ClassifyError::BadModelFile { detail };
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        if file.magic != MODEL_MAGIC {
            return Err(bad(format!("bad magic {:?}", file.magic)));
        }
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(bad(format!(
                "format version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        if file.model.vocab_size != expected_vocab_size {
            return Err(ClassifyError::VocabularyMismatch {
                expected: file.model.vocab_size,
                found: expected_vocab_size,
            });
        }
        Ok(file.model)
    }
}

/// Outcome of replaying a feedback log onto a base model.
#[derive(Debug, Clone)]
pub struct Replay {
    pub model: ClassifierModel,
    pub applied: usize,
    /// Event ids skipped because they target another field, name a label the
    /// base model lacks, or repeat an earlier id.
    pub skipped: Vec<String>,
}

pub fn replay_feedback<'e, I>(
    base: &ClassifierModel,
    features: &FeatureSpace<'_>,
    events: I,
) -> Result<Replay, ClassifyError>
where
    I: IntoIterator<Item = &'e FeedbackEvent>,
{
    base.check_space(features)?;
    let mut model = base.clone();
    let mut applied = 0;
    let mut skipped = Vec::new();
    for event in events {
        match model.apply_feedback(features, event) {
            Ok(()) => applied += 1,
            Err(
                ClassifyError::TargetMismatch { .. }
                | ClassifyError::UnknownLabel { .. }
                | ClassifyError::DuplicateEventId { .. },
            ) => skipped.push(event.event_id.clone()),
            Err(other) => return Err(other),
        }
    }
    Ok(Replay {
        model,
        applied,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub target_field: TargetField,
    pub k: usize,
    pub gamma: f64,
    pub drop_code_terms: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            target_field: TargetField::Assignee,
            k: 15,
            gamma: 1.0,
            drop_code_terms: false,
        }
    }
}

pub const KERNEL_LEARNER: &str = "Gaussian-kernel weighted k nearest neighbours in tf-idf space";

/// Votes the labels of the `k` most cosine-similar labeled tickets, each
/// weighted by `exp(-gamma * (1 - cos))`.
pub fn predict_with_kernel(
    config: &KernelConfig,
    features: &FeatureSpace<'_>,
    ticket: &TicketRecord,
) -> Result<Recommendation, ClassifyError> {
    if !(config.gamma > 0.0 && config.gamma.is_finite()) {
        return Err(ClassifyError::BadBandwidth);
    }
    if config.k == 0 {
        return Err(ClassifyError::BadNeighbourCount);
    }
    if !ticket.has_text() {
        return Err(ClassifyError::EmptyText);
    }
    let corpus = features.corpus();
    let x = features.featurize_ticket(ticket, config.drop_code_terms);
    let mut neighbours: Vec<(f64, usize)> = corpus
        .tickets()
        .iter()
        .enumerate()
        .filter(|(_, t)| !config.target_field.label_of(t).is_empty())
        .map(|(i, t)| (x.dot(&features.featurize_ticket(t, config.drop_code_terms)), i))
        .collect();
    neighbours.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    neighbours.truncate(config.k);

    let mut votes: BTreeMap<&str, f64> = BTreeMap::new();
    for &(cos, i) in &neighbours {
        let label = config.target_field.label_of(&corpus.tickets()[i]);
        *votes.entry(label).or_insert(0.0) += (-config.gamma * (1.0 - cos)).exp();
    }
    let mut ranked: Vec<RankedLabel> = votes
        .into_iter()
        .map(|(label, score)| RankedLabel {
            label: label.to_string(),
            score,
            demoted: false,
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.label.cmp(&b.label)));
    Ok(Recommendation {
        ranked,
        model_version: None,
        recency_filter: None,
        learner: KERNEL_LEARNER.to_string(),
    })
}
