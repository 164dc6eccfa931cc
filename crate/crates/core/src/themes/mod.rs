//! Central problem-area mining over extracted phrases.
//!
//! Phrases are scored by term frequency, tf-idf, LSA centrality or LDA, and
//! the rankings can be combined by reciprocal-rank fusion. A greedy walk down
//! a ranking selects central terms until a ticket coverage target is met.

pub mod lda;
pub mod svd;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Corpus;
use crate::text::TextPipeline;

pub use lda::{fit_lda, LdaConfig, LdaModel};
pub use svd::{truncated_svd, CsrMatrix, DenseMatrix, LinearOperator, Svd, SvdError, SvdOptions};

pub const RRF_K: f64 = 60.0;
pub const DEFAULT_COVERAGE_TARGET: f64 = 0.85;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "code")]
pub enum ThemeError {
    #[error("no phrases could be extracted from the corpus")]
    NoPhrases,
    #[error("rank {requested} exceeds the smaller matrix dimension {max}")]
    RankTooLarge { requested: usize, max: usize },
    #[error("bad hyperparameters: {detail}")]
    BadHyperparameters { detail: String },
    #[error("unknown tag field {field:?}")]
    UnknownTagField { field: String },
    #[error("phrase {phrase:?} was not mined from this corpus")]
    UnknownPhrase { phrase: String },
    #[error("gold theme list is empty")]
    EmptyGold,
}

impl From<SvdError> for ThemeError {
    fn from(e: SvdError) -> Self {
        match e {
            SvdError::RankTooLarge { requested, max } => ThemeError::RankTooLarge { requested, max },
            SvdError::ZeroRank => ThemeError::BadHyperparameters {
                detail: "LSA rank must be at least 1".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PhraseEntry {
    text: String,
    tokens: Vec<String>,
}

/// Per-ticket token streams and extracted phrase occurrences, with phrase
/// ids assigned in lexicographic order of the phrase text.
#[derive(Debug, Clone)]
pub struct PhraseCorpus {
    ticket_ids: Vec<String>,
    doc_tokens: Vec<Vec<String>>,
    phrases: Vec<PhraseEntry>,
    by_text: HashMap<String, u32>,
    doc_units: Vec<Vec<u32>>,
    token_docs: HashMap<String, Vec<u32>>,
}

impl PhraseCorpus {
    /// Tokenizes and chunks summary and description of every ticket.
    pub fn build(corpus: &Corpus) -> Self {
        let pipeline = corpus.pipeline();
        let mut ids = Vec::with_capacity(corpus.len());
        let mut tokens = Vec::with_capacity(corpus.len());
        let mut phrases = Vec::with_capacity(corpus.len());
        for ticket in corpus.tickets() {
            let mut stream = Vec::new();
            let mut units = Vec::new();
            for (n, part) in [&ticket.summary, &ticket.description].into_iter().enumerate() {
                let toks = pipeline.tokenize(part);
                if n > 0 {
                    // never matches a phrase token, so phrases cannot span fields
                    stream.push(String::new());
                }
                stream.extend(toks.iter().map(|t| t.normalized.clone()));
                units.extend(
                    pipeline
                        .extract_phrases(&toks)
                        .into_iter()
                        .map(|p| p.tokens.into_iter().map(|t| t.normalized).collect()),
                );
            }
            ids.push(ticket.id.clone());
            tokens.push(stream);
            phrases.push(units);
        }
        Self::from_parts(ids, tokens, phrases)
    }

    /// Assembles a phrase corpus from token streams and, per document, the
    /// phrase occurrences (each a token sequence) extracted from it.
    pub fn from_parts(
        ticket_ids: Vec<String>,
        doc_tokens: Vec<Vec<String>>,
        doc_phrases: Vec<Vec<Vec<String>>>,
    ) -> Self {
        assert_eq!(ticket_ids.len(), doc_tokens.len());
        assert_eq!(ticket_ids.len(), doc_phrases.len());
        let distinct: BTreeMap<String, Vec<String>> = doc_phrases
            .iter()
            .flatten()
            .filter(|p| !p.is_empty())
            .map(|p| (p.join(" "), p.clone()))
            .collect();
        let phrases: Vec<PhraseEntry> = distinct
            .into_iter()
            .map(|(text, tokens)| PhraseEntry { text, tokens })
            .collect();
        let by_text: HashMap<String, u32> = phrases
            .iter()
            .enumerate()
            .map(|(i, p)| (p.text.clone(), i as u32))
            .collect();
        let doc_units = doc_phrases
            .iter()
            .map(|units| {
                units
                    .iter()
                    .filter(|p| !p.is_empty())
                    .map(|p| by_text[&p.join(" ")])
                    .collect()
            })
            .collect();
        let mut token_docs: HashMap<String, Vec<u32>> = HashMap::new();
        for (d, toks) in doc_tokens.iter().enumerate() {
            for t in toks.iter().collect::<BTreeSet<_>>() {
                token_docs.entry(t.clone()).or_default().push(d as u32);
            }
        }
        Self {
            ticket_ids,
            doc_tokens,
            phrases,
            by_text,
            doc_units,
            token_docs,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.ticket_ids.len()
    }

    pub fn phrase_count(&self) -> usize {
        self.phrases.len()
    }

    pub fn ticket_ids(&self) -> &[String] {
        &self.ticket_ids
    }

    pub fn phrase(&self, id: u32) -> &str {
        &self.phrases[id as usize].text
    }

    pub fn phrase_texts(&self) -> Vec<&str> {
        self.phrases.iter().map(|p| p.text.as_str()).collect()
    }

    pub fn phrase_id(&self, text: &str) -> Option<u32> {
        self.by_text.get(text).copied()
    }

    /// Extracted phrase occurrences per document.
    pub fn doc_units(&self) -> &[Vec<u32>] {
        &self.doc_units
    }

    /// Documents whose token stream contains the phrase as a contiguous
    /// token subsequence, in corpus order.
    pub fn supporting_docs(&self, id: u32) -> Vec<usize> {
        let tokens = &self.phrases[id as usize].tokens;
        let Some(candidates) = self.token_docs.get(&tokens[0]) else {
            return Vec::new();
        };
        candidates
            .iter()
            .map(|&d| d as usize)
            .filter(|&d| contains_run(&self.doc_tokens[d], tokens))
            .collect()
    }

    fn supporting_ids(&self, id: u32) -> Vec<String> {
        self.supporting_docs(id)
            .into_iter()
            .map(|d| self.ticket_ids[d].clone())
            .collect()
    }

    fn lookup(&self, phrase: &str) -> Result<u32, ThemeError> {
        self.phrase_id(phrase)
            .ok_or_else(|| ThemeError::UnknownPhrase {
                phrase: phrase.to_string(),
            })
    }

    /// Phrase-by-document matrix of tf-idf weights of phrases as unit terms.
    pub fn tfidf_matrix(&self) -> CsrMatrix {
        let idf = self.idf();
        let mut triplets = Vec::new();
        for (d, units) in self.doc_units.iter().enumerate() {
            for &p in units {
                if idf[p as usize] > 0.0 {
                    triplets.push((p as usize, d, idf[p as usize]));
                }
            }
        }
        CsrMatrix::from_triplets(self.phrase_count(), self.doc_count(), triplets)
    }

    fn doc_freq(&self) -> Vec<usize> {
        let mut df = vec![0usize; self.phrase_count()];
        for units in &self.doc_units {
            for p in units.iter().collect::<BTreeSet<_>>() {
                df[*p as usize] += 1;
            }
        }
        df
    }

    fn idf(&self) -> Vec<f64> {
        let n = self.doc_count() as f64;
        self.doc_freq()
            .into_iter()
            .map(|df| if df == 0 { 0.0 } else { (n / df as f64).ln() })
            .collect()
    }
}

/// Whether `needle` occurs as a contiguous run inside `haystack`. An empty
/// needle never matches.
pub fn contains_run<T: PartialEq>(haystack: &[T], needle: &[T]) -> bool {
    !needle.is_empty()
        && needle.len() <= haystack.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Total number of extracted occurrences of each phrase.
pub fn score_tf(pc: &PhraseCorpus) -> Vec<f64> {
    let mut tf = vec![0.0; pc.phrase_count()];
    for &p in pc.doc_units.iter().flatten() {
        tf[p as usize] += 1.0;
    }
    tf
}

/// Sum over documents of `tf(p, d) * ln(N / df(p))`.
pub fn score_tf_idf(pc: &PhraseCorpus) -> Vec<f64> {
    score_tf(pc)
        .into_iter()
        .zip(pc.idf())
        .map(|(tf, idf)| tf * idf)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsaCentrality {
    /// `sqrt(sum_j (s_j U_ij)^2)`
    #[default]
    SingularValueWeighted,
    /// `sqrt(sum_j U_ij^2)`
    Unweighted,
}

/// Centrality of each row of `a` under its rank-`rank` SVD.
pub fn lsa_centrality<A: LinearOperator + ?Sized>(
    a: &A,
    rank: usize,
    centrality: LsaCentrality,
    seed: u64,
) -> Result<(Vec<f64>, Svd), ThemeError> {
    let svd = truncated_svd(
        a,
        rank,
        &SvdOptions {
            seed,
            ..SvdOptions::default()
        },
    )?;
    let scores = (0..a.nrows())
        .map(|i| {
            (0..svd.rank())
                .map(|j| {
                    let w = match centrality {
                        LsaCentrality::SingularValueWeighted => svd.s[j],
                        LsaCentrality::Unweighted => 1.0,
                    };
                    (w * svd.u[j][i]).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok((scores, svd))
}

pub fn score_lsa(
    pc: &PhraseCorpus,
    rank: usize,
    centrality: LsaCentrality,
    seed: u64,
) -> Result<(Vec<f64>, Svd), ThemeError> {
    lsa_centrality(&pc.tfidf_matrix(), rank, centrality, seed)
}

/// LDA over phrase occurrences; a phrase scores its largest P(phrase | topic).
pub fn score_lda(
    pc: &PhraseCorpus,
    config: &LdaConfig,
    seed: u64,
) -> Result<(Vec<f64>, LdaModel), ThemeError> {
    let model = fit_lda(&pc.doc_units, pc.phrase_count(), config, seed)
        .map_err(|detail| ThemeError::BadHyperparameters { detail })?;
    Ok((model.word_scores(), model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPhrase {
    pub phrase: String,
    pub score: f64,
}

/// Phrases ordered by descending score, ties lexicographic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub method: String,
    pub entries: Vec<RankedPhrase>,
}

impl Ranking {
    pub fn from_scores<S: AsRef<str>>(method: &str, phrases: &[S], scores: &[f64]) -> Self {
        assert_eq!(phrases.len(), scores.len());
        let mut entries: Vec<RankedPhrase> = phrases
            .iter()
            .zip(scores)
            .map(|(p, &score)| RankedPhrase {
                phrase: p.as_ref().to_string(),
                score,
            })
            .collect();
        sort_entries(&mut entries);
        Self {
            method: method.to_string(),
            entries,
        }
    }

    pub fn phrases(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.phrase.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn sort_entries(entries: &mut [RankedPhrase]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.phrase.cmp(&b.phrase)));
}

/// Reciprocal-rank fusion: `sum over rankings of 1 / (60 + rank)` with
/// 1-based ranks; a ranking that lacks a phrase contributes nothing.
pub fn fuse_rankings(method: &str, rankings: &[&Ranking]) -> Ranking {
    let mut fused: BTreeMap<&str, f64> = BTreeMap::new();
    for ranking in rankings {
        for (pos, e) in ranking.entries.iter().enumerate() {
            *fused.entry(e.phrase.as_str()).or_insert(0.0) += 1.0 / (RRF_K + (pos + 1) as f64);
        }
    }
    let mut entries: Vec<RankedPhrase> = fused
        .into_iter()
        .map(|(phrase, score)| RankedPhrase {
            phrase: phrase.to_string(),
            score,
        })
        .collect();
    sort_entries(&mut entries);
    Ranking {
        method: method.to_string(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeTerm {
    pub phrase: String,
    pub method_scores: BTreeMap<String, f64>,
    /// 1-based position in the report's ranking.
    pub fused_rank: usize,
    pub supporting_tickets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub terms: Vec<ThemeTerm>,
    pub coverage: f64,
    /// Coverage after each selected term.
    pub coverage_curve: Vec<f64>,
}

/// Walks the ranking and keeps a phrase only if it covers a ticket no
/// earlier pick covers; stops once coverage reaches `target`.
pub fn select_central_terms(ranking: &Ranking, pc: &PhraseCorpus, target: f64) -> Selection {
    let n = pc.doc_count();
    let mut covered = vec![false; n];
    let mut count = 0usize;
    let mut terms = Vec::new();
    let mut curve = Vec::new();
    let fraction = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    for (pos, entry) in ranking.entries.iter().enumerate() {
        if n == 0 || fraction(count) >= target {
            break;
        }
        let Some(id) = pc.phrase_id(&entry.phrase) else {
            continue;
        };
        let docs = pc.supporting_docs(id);
        let fresh = docs.iter().filter(|&&d| !covered[d]).count();
        if fresh == 0 {
            continue;
        }
        for &d in &docs {
            covered[d] = true;
        }
        count += fresh;
        curve.push(fraction(count));
        terms.push(ThemeTerm {
            phrase: entry.phrase.clone(),
            method_scores: BTreeMap::from([(ranking.method.clone(), entry.score)]),
            fused_rank: pos + 1,
            supporting_tickets: docs.iter().map(|&d| pc.ticket_ids[d].clone()).collect(),
        });
    }
    Selection {
        terms,
        coverage: fraction(count),
        coverage_curve: curve,
    }
}

/// Per value of `tag_field`: the fraction of tickets with that value that
/// contain at least one selected term. Tickets without a value are skipped.
pub fn compute_spread(
    terms: &[ThemeTerm],
    corpus: &Corpus,
    tag_field: &str,
) -> Result<BTreeMap<String, f64>, ThemeError> {
    if corpus.schema().field(tag_field).is_none() {
        return Err(ThemeError::UnknownTagField {
            field: tag_field.to_string(),
        });
    }
    let covered: BTreeSet<&str> = terms
        .iter()
        .flat_map(|t| t.supporting_tickets.iter().map(String::as_str))
        .collect();
    let mut totals: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ticket in corpus.tickets() {
        let Some(value) = ticket.field_value(tag_field).filter(|v| !v.is_empty()) else {
            continue;
        };
        let slot = totals.entry(value.to_string()).or_insert((0, 0));
        slot.1 += 1;
        if covered.contains(ticket.id.as_str()) {
            slot.0 += 1;
        }
    }
    Ok(totals
        .into_iter()
        .map(|(v, (hit, all))| (v, hit as f64 / all as f64))
        .collect())
}

/// Normalized token sequence of a free-text phrase.
pub fn normalize_phrase(pipeline: &TextPipeline, phrase: &str) -> Vec<String> {
    pipeline.terms(phrase)
}

fn theme_matches(a: &[String], b: &[String]) -> bool {
    contains_run(a, b) || contains_run(b, a)
}

/// Which gold themes are matched by some mined phrase, after normalization,
/// when either token sequence contains the other as a contiguous run.
pub fn recalled_themes(
    mined: &[String],
    gold: &[String],
    pipeline: &TextPipeline,
) -> Result<Vec<bool>, ThemeError> {
    if gold.is_empty() {
        return Err(ThemeError::EmptyGold);
    }
    let mined: Vec<Vec<String>> = mined.iter().map(|m| normalize_phrase(pipeline, m)).collect();
    Ok(gold
        .iter()
        .map(|g| {
            let g = normalize_phrase(pipeline, g);
            mined.iter().any(|m| theme_matches(m, &g))
        })
        .collect())
}

pub fn evaluate_recall(
    mined: &[String],
    gold: &[String],
    pipeline: &TextPipeline,
) -> Result<f64, ThemeError> {
    let hits = recalled_themes(mined, gold, pipeline)?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / gold.len() as f64)
}

/// Recall of each prefix of `mined`; entry `i` is recall at N = i + 1.
pub fn recall_curve(
    mined: &[String],
    gold: &[String],
    pipeline: &TextPipeline,
) -> Result<Vec<f64>, ThemeError> {
    if gold.is_empty() {
        return Err(ThemeError::EmptyGold);
    }
    let gold: Vec<Vec<String>> = gold.iter().map(|g| normalize_phrase(pipeline, g)).collect();
    let mut hit = vec![false; gold.len()];
    let mut curve = Vec::with_capacity(mined.len());
    for m in mined {
        let m = normalize_phrase(pipeline, m);
        for (h, g) in hit.iter_mut().zip(&gold) {
            *h = *h || theme_matches(&m, g);
        }
        curve.push(hit.iter().filter(|&&h| h).count() as f64 / gold.len() as f64);
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemePairEvidence {
    pub p: String,
    pub q: String,
    pub count: usize,
    pub tickets: Vec<String>,
}

/// Tickets that contain both mined phrases.
pub fn pair_evidence(pc: &PhraseCorpus, p: &str, q: &str) -> Result<ThemePairEvidence, ThemeError> {
    let pid = pc.lookup(p)?;
    let qid = pc.lookup(q)?;
    let with_q: BTreeSet<usize> = pc.supporting_docs(qid).into_iter().collect();
    let tickets: Vec<String> = pc
        .supporting_docs(pid)
        .into_iter()
        .filter(|d| with_q.contains(d))
        .map(|d| pc.ticket_ids[d].clone())
        .collect();
    Ok(ThemePairEvidence {
        p: p.to_string(),
        q: q.to_string(),
        count: tickets.len(),
        tickets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ThemeMethod {
    #[serde(rename = "TF")]
    Tf,
    #[serde(rename = "TF_IDF")]
    TfIdf,
    #[serde(rename = "LSA")]
    Lsa,
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "LSA+TF")]
    LsaTf,
    #[serde(rename = "LSA+TF_IDF")]
    LsaTfIdf,
    #[serde(rename = "LSA+LDA")]
    LsaLda,
    #[serde(rename = "LDA+TF")]
    LdaTf,
    #[serde(rename = "LDA+TF_IDF")]
    LdaTfIdf,
}

impl ThemeMethod {
    pub const ALL: [ThemeMethod; 9] = [
        ThemeMethod::Tf,
        ThemeMethod::TfIdf,
        ThemeMethod::Lsa,
        ThemeMethod::Lda,
        ThemeMethod::LsaTf,
        ThemeMethod::LsaTfIdf,
        ThemeMethod::LsaLda,
        ThemeMethod::LdaTf,
        ThemeMethod::LdaTfIdf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ThemeMethod::Tf => "TF",
            ThemeMethod::TfIdf => "TF_IDF",
            ThemeMethod::Lsa => "LSA",
            ThemeMethod::Lda => "LDA",
            ThemeMethod::LsaTf => "LSA+TF",
            ThemeMethod::LsaTfIdf => "LSA+TF_IDF",
            ThemeMethod::LsaLda => "LSA+LDA",
            ThemeMethod::LdaTf => "LDA+TF",
            ThemeMethod::LdaTfIdf => "LDA+TF_IDF",
        }
    }

    /// Base methods combined by this method (itself if it is a base method).
    pub fn components(&self) -> Vec<ThemeMethod> {
        use ThemeMethod::*;
        match self {
            Tf | TfIdf | Lsa | Lda => vec![*self],
            LsaTf => vec![Lsa, Tf],
            LsaTfIdf => vec![Lsa, TfIdf],
            LsaLda => vec![Lsa, Lda],
            LdaTf => vec![Lda, Tf],
            LdaTfIdf => vec![Lda, TfIdf],
        }
    }

    fn uses(&self, base: ThemeMethod) -> bool {
        self.components().contains(&base)
    }
}

impl std::str::FromStr for ThemeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        ThemeMethod::ALL
            .into_iter()
            .find(|m| m.name() == wanted)
            .ok_or_else(|| format!("unknown theme method {s:?}"))
    }
}

impl std::fmt::Display for ThemeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThemeConfig {
    pub top_n: usize,
    pub coverage_target: f64,
    /// Capped at the smaller dimension of the phrase-document matrix.
    pub lsa_rank: usize,
    pub lsa_centrality: LsaCentrality,
    pub lda: LdaConfig,
    pub seed: u64,
    pub tag_field: Option<String>,
}

impl Default for ThemeConfig {
    fn default() -> Self {
        Self {
            top_n: 50,
            coverage_target: DEFAULT_COVERAGE_TARGET,
            lsa_rank: 50,
            lsa_centrality: LsaCentrality::default(),
            lda: LdaConfig::default(),
            seed: 0,
            tag_field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub top_n: usize,
    pub coverage_target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lsa_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lsa_centrality: Option<LsaCentrality>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lda: Option<LdaConfig>,
    pub fusion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeReport {
    pub method: ThemeMethod,
    /// Top `top_n` phrases of the method's ranking.
    pub ranked: Vec<ThemeTerm>,
    /// Greedy coverage selection over the full ranking.
    pub central_terms: Vec<ThemeTerm>,
    pub coverage: f64,
    pub tag_field: Option<String>,
    pub spread: BTreeMap<String, f64>,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub corpus_version: String,
    pub ticket_count: usize,
    pub phrase_count: usize,
}

/// Scores, rankings and reports over one corpus; base scores are computed
/// once and shared across methods.
pub struct ThemeMiner<'a> {
    corpus: &'a Corpus,
    phrases: PhraseCorpus,
    config: ThemeConfig,
    base: BTreeMap<ThemeMethod, Vec<f64>>,
}

impl<'a> ThemeMiner<'a> {
    pub fn new(corpus: &'a Corpus, config: ThemeConfig) -> Result<Self, ThemeError> {
        let phrases = PhraseCorpus::build(corpus);
        if phrases.phrase_count() == 0 {
            return Err(ThemeError::NoPhrases);
        }
        if let Some(field) = &config.tag_field {
            if corpus.schema().field(field).is_none() {
                return Err(ThemeError::UnknownTagField {
                    field: field.clone(),
                });
            }
        }
        if !(0.0..=1.0).contains(&config.coverage_target) {
            return Err(ThemeError::BadHyperparameters {
                detail: format!("coverage target {} outside [0, 1]", config.coverage_target),
            });
        }
        Ok(Self {
            corpus,
            phrases,
            config,
            base: BTreeMap::new(),
        })
    }

    pub fn phrases(&self) -> &PhraseCorpus {
        &self.phrases
    }

    pub fn config(&self) -> &ThemeConfig {
        &self.config
    }

    pub fn effective_lsa_rank(&self) -> usize {
        self.config
            .lsa_rank
            .min(self.phrases.phrase_count().min(self.phrases.doc_count()))
    }

    fn base_scores(&mut self, method: ThemeMethod) -> Result<&[f64], ThemeError> {
        if !self.base.contains_key(&method) {
            let scores = match method {
                ThemeMethod::Tf => score_tf(&self.phrases),
                ThemeMethod::TfIdf => score_tf_idf(&self.phrases),
                ThemeMethod::Lsa => {
                    score_lsa(
                        &self.phrases,
                        self.effective_lsa_rank(),
                        self.config.lsa_centrality,
                        self.config.seed,
                    )?
                    .0
                }
                ThemeMethod::Lda => score_lda(&self.phrases, &self.config.lda, self.config.seed)?.0,
                fused => unreachable!("{fused} is not a base method"),
            };
            self.base.insert(method, scores);
        }
        Ok(&self.base[&method])
    }

    pub fn ranking(&mut self, method: ThemeMethod) -> Result<Ranking, ThemeError> {
        let components = method.components();
        let mut rankings = Vec::with_capacity(components.len());
        for base in &components {
            let scores = self.base_scores(*base)?.to_vec();
            rankings.push(Ranking::from_scores(
                base.name(),
                &self.phrases.phrase_texts(),
                &scores,
            ));
        }
        if rankings.len() == 1 {
            return Ok(rankings.pop().unwrap());
        }
        let refs: Vec<&Ranking> = rankings.iter().collect();
        Ok(fuse_rankings(method.name(), &refs))
    }

    fn annotate(&self, term: &mut ThemeTerm, method: ThemeMethod) {
        let id = self.phrases.phrase_id(&term.phrase).expect("mined phrase");
        for base in method.components() {
            if let Some(scores) = self.base.get(&base) {
                term.method_scores
                    .insert(base.name().to_string(), scores[id as usize]);
            }
        }
    }

    pub fn report(&mut self, method: ThemeMethod) -> Result<ThemeReport, ThemeError> {
        let ranking = self.ranking(method)?;
        let mut selection = select_central_terms(&ranking, &self.phrases, self.config.coverage_target);
        for t in &mut selection.terms {
            self.annotate(t, method);
        }
        let mut ranked = Vec::new();
        for (pos, entry) in ranking.entries.iter().take(self.config.top_n).enumerate() {
            let id = self.phrases.phrase_id(&entry.phrase).expect("mined phrase");
            let mut term = ThemeTerm {
                phrase: entry.phrase.clone(),
                method_scores: BTreeMap::from([(ranking.method.clone(), entry.score)]),
                fused_rank: pos + 1,
                supporting_tickets: self.phrases.supporting_ids(id),
            };
            self.annotate(&mut term, method);
            ranked.push(term);
        }
        let spread = match &self.config.tag_field {
            Some(field) => compute_spread(&selection.terms, self.corpus, field)?,
            None => BTreeMap::new(),
        };
        let hyperparameters = Hyperparameters {
            top_n: self.config.top_n,
            coverage_target: self.config.coverage_target,
            lsa_rank: method
                .uses(ThemeMethod::Lsa)
                .then(|| self.effective_lsa_rank()),
            lsa_centrality: method
                .uses(ThemeMethod::Lsa)
                .then_some(self.config.lsa_centrality),
            lda: method
                .uses(ThemeMethod::Lda)
                .then(|| self.config.lda.resolved()),
            fusion: (method.components().len() > 1)
                .then(|| format!("reciprocal rank, k = {RRF_K}")),
        };
        Ok(ThemeReport {
            method,
            ranked,
            central_terms: selection.terms,
            coverage: selection.coverage,
            tag_field: self.config.tag_field.clone(),
            spread,
            hyperparameters,
            seed: self.config.seed,
            corpus_version: self.corpus.content_hash().0,
            ticket_count: self.phrases.doc_count(),
            phrase_count: self.phrases.phrase_count(),
        })
    }
}

pub fn mine_themes(
    corpus: &Corpus,
    method: ThemeMethod,
    config: &ThemeConfig,
) -> Result<ThemeReport, ThemeError> {
    ThemeMiner::new(corpus, config.clone())?.report(method)
}

impl ThemeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: header block, ranked phrases, central terms, spread.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method           {}", self.method);
        let _ = writeln!(out, "corpus version   {}", self.corpus_version);
        let _ = writeln!(out, "seed             {}", self.seed);
        let _ = writeln!(
            out,
            "hyperparameters  {}",
            serde_json::to_string(&self.hyperparameters).expect("serializes")
        );
        let _ = writeln!(
            out,
            "coverage         {:.4} (target {:.2}, {} central terms)",
            self.coverage,
            self.hyperparameters.coverage_target,
            self.central_terms.len()
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>4}  {:<40} {:>12} {:>8}", "rank", "phrase", "score", "tickets");
        for t in &self.ranked {
            let score = t.method_scores.get(self.method.name()).copied().unwrap_or(0.0);
            let _ = writeln!(
                out,
                "{:>4}  {:<40} {:>12.6} {:>8}",
                t.fused_rank,
                t.phrase,
                score,
                t.supporting_tickets.len()
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "central terms");
        for t in &self.central_terms {
            let _ = writeln!(
                out,
                "{:>4}  {:<40} {:>8}",
                t.fused_rank,
                t.phrase,
                t.supporting_tickets.len()
            );
        }
        if let Some(field) = &self.tag_field {
            let _ = writeln!(out);
            let _ = writeln!(out, "spread by {field}");
            for (value, frac) in &self.spread {
                let _ = writeln!(out, "      {value:<40} {frac:>8.4}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Each document's tokens are its phrases, each phrase one token.
    fn incidence(docs: &[&str]) -> PhraseCorpus {
        PhraseCorpus::from_parts(
            (0..docs.len()).map(|i| format!("T{i}")).collect(),
            docs.iter().map(|d| toks(d)).collect(),
            docs.iter()
                .map(|d| d.split_whitespace().map(|w| vec![w.to_string()]).collect())
                .collect(),
        )
    }

    #[test]
    fn tf_counts_occurrences() {
        let pc = incidence(&["a b", "a", "a c", "a", "a b c", "d"]);
        let tf = score_tf(&pc);
        assert_eq!(tf[pc.phrase_id("a").unwrap() as usize], 5.0);
        assert_eq!(tf[pc.phrase_id("d").unwrap() as usize], 1.0);
    }

    #[test]
    fn tf_idf_of_ubiquitous_phrase_is_zero() {
        let pc = incidence(&["a b", "a", "a c"]);
        let s = score_tf_idf(&pc);
        assert_eq!(s[pc.phrase_id("a").unwrap() as usize], 0.0);
        let b = s[pc.phrase_id("b").unwrap() as usize];
        assert!((b - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rrf_scores() {
        let a = Ranking::from_scores("A", &["x", "y", "z"], &[3.0, 2.0, 1.0]);
        let b = Ranking::from_scores("B", &["x", "y", "w"], &[9.0, 5.0, 1.0]);
        let fused = fuse_rankings("A+B", &[&a, &b]);
        assert_eq!(fused.entries[0].phrase, "x");
        assert!((fused.entries[0].score - 2.0 / 61.0).abs() < 1e-15);
        let w = fused.entries.iter().find(|e| e.phrase == "w").unwrap();
        assert!((w.score - 1.0 / 63.0).abs() < 1e-15);
        let mut got: Vec<&str> = fused.phrases();
        got.sort();
        assert_eq!(got, ["w", "x", "y", "z"]);
        assert_eq!(fuse_rankings("A+A", &[&a, &a]).phrases(), a.phrases());
        // one-sided entries tie at 1/63 and break lexicographically
        assert_eq!(fused.phrases(), ["x", "y", "w", "z"]);
    }

    #[test]
    fn single_universal_phrase_covers_everything() {
        let pc = incidence(&["a b", "a", "a c"]);
        let r = Ranking::from_scores("TF", &["a", "b", "c"], &[3.0, 1.0, 1.0]);
        let sel = select_central_terms(&r, &pc, 0.85);
        assert_eq!(sel.terms.len(), 1);
        assert_eq!(sel.coverage, 1.0);
    }

    #[test]
    fn unreachable_target_reports_exhausted_coverage() {
        let pc = incidence(&["a", "b", "a", "c", "", "", "", "", "", "b"]);
        let r = Ranking::from_scores("TF", &["a", "b", "c"], &[2.0, 2.0, 1.0]);
        let sel = select_central_terms(&r, &pc, 0.85);
        assert_eq!(sel.coverage, 0.5);
        assert_eq!(sel.terms.len(), 3);
    }

    #[test]
    fn redundant_phrases_are_skipped() {
        let pc = incidence(&["a b", "a b", "c", "a"]);
        let r = Ranking::from_scores("TF", &["a", "b", "c"], &[3.0, 2.0, 1.0]);
        let sel = select_central_terms(&r, &pc, 1.0);
        assert_eq!(
            sel.terms.iter().map(|t| t.phrase.as_str()).collect::<Vec<_>>(),
            ["a", "c"]
        );
        assert_eq!(sel.coverage_curve, [0.75, 1.0]);
        assert_eq!(sel.terms[1].fused_rank, 3);
    }

    #[test]
    fn multi_token_containment() {
        let pc = PhraseCorpus::from_parts(
            vec!["A".into(), "B".into(), "C".into()],
            vec![toks("user login failure page"), toks("login page failure"), toks("login failure")],
            vec![
                vec![toks("user login failure page")],
                vec![toks("login page failure")],
                vec![toks("login failure")],
            ],
        );
        let id = pc.phrase_id("login failure").unwrap();
        assert_eq!(pc.supporting_docs(id), [0, 2]);
        let ev = pair_evidence(&pc, "login failure", "user login failure page").unwrap();
        assert_eq!(ev.tickets, ["A"]);
        assert_eq!(ev.count, 1);
        let same = pair_evidence(&pc, "login failure", "login failure").unwrap();
        assert_eq!(same.tickets, ["A", "C"]);
        assert!(matches!(
            pair_evidence(&pc, "login", "login failure"),
            Err(ThemeError::UnknownPhrase { .. })
        ));
    }

    #[test]
    fn recall_by_containment() {
        let pipeline = TextPipeline::default();
        let mined = vec!["user login failures page".to_string(), "printer jam".to_string()];
        let gold = vec![
            "Login failure".to_string(),
            "printer".to_string(),
            "tax report".to_string(),
            "page user".to_string(),
        ];
        assert_eq!(
            recalled_themes(&mined, &gold, &pipeline).unwrap(),
            [true, true, false, false]
        );
        assert_eq!(evaluate_recall(&mined, &gold, &pipeline).unwrap(), 0.5);
        assert_eq!(evaluate_recall(&gold, &gold, &pipeline).unwrap(), 1.0);
        assert_eq!(
            evaluate_recall(&["zzz".to_string()], &gold, &pipeline).unwrap(),
            0.0
        );
        assert_eq!(
            evaluate_recall(&mined, &[], &pipeline).unwrap_err(),
            ThemeError::EmptyGold
        );
        assert_eq!(recall_curve(&mined, &gold, &pipeline).unwrap(), [0.25, 0.5]);
    }

    #[test]
    fn lsa_rank_one_centrality_is_row_norm() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 2.0, 2.0],
            vec![2.0, 4.0, 4.0],
            vec![3.0, 6.0, 6.0],
        ]);
        let (scores, _) = lsa_centrality(&a, 1, LsaCentrality::SingularValueWeighted, 0).unwrap();
        for (s, want) in scores.iter().zip([3.0, 6.0, 9.0]) {
            assert!((s - want).abs() < 1e-10);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in ThemeMethod::ALL {
            assert_eq!(m.name().parse::<ThemeMethod>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert_eq!("lsa+tf_idf".parse::<ThemeMethod>().unwrap(), ThemeMethod::LsaTfIdf);
    }
}
