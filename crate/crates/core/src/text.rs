//! Tokenization, cryptic code-term detection, phrase chunking and sparse
//! term-weight vectors.

use std::collections::BTreeSet;
use std::path::Path;
use std::{fs, io};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Vocabulary;

const STOPWORDS: &str = include_str!("../resources/stopwords.txt");
const VERBS: &str = include_str!("../resources/verbs.txt");
const ADJECTIVES: &str = include_str!("../resources/adjectives.txt");
const PARTICLES: &str = include_str!("../resources/particles.txt");

pub const DEFAULT_MAX_PHRASE_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    CodeTerm,
    Number,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub kind: TokenKind,
    /// Index in the emitted token stream.
    pub position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseKind {
    NounPhrase,
    VerbPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub tokens: Vec<Token>,
    pub kind: PhraseKind,
}

impl Phrase {
    /// Normalized tokens joined by single spaces.
    pub fn text(&self) -> String {
        join_normalized(&self.tokens)
    }
}

pub fn join_normalized(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.normalized.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Byte range `[start, end)` of a code term inside the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Finds cryptic team-internal terms that must be kept atomic:
///
/// * regions enclosed in `#*` ... `*#`;
/// * `#` immediately followed by alphanumerics (`#ABCDD11759`);
/// * alphanumeric runs of length >= 6 with at least two digits and two
///   letters (`JSP045ABCD`).
///
/// Spans are sorted and pairwise disjoint.
pub fn detect_code_terms(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if let Some(body) = rest.strip_prefix("#*") {
            if let Some(close) = body.find("*#") {
                if close > 0 {
                    let end = i + 2 + close + 2;
                    spans.push(Span { start: i, end });
                    i = end;
                    continue;
                }
            }
        }
        let c = rest.chars().next().expect("non-empty rest");
        if c == '#' {
            let run = alnum_run_len(&rest[1..]);
            if run > 0 {
                let end = i + 1 + run;
                spans.push(Span { start: i, end });
                i = end;
                continue;
            }
        } else if c.is_alphanumeric() {
            let run = alnum_run_len(rest);
            if is_cryptic(&rest[..run]) {
                spans.push(Span { start: i, end: i + run });
            }
            i += run;
            continue;
        }
        i += c.len_utf8();
    }
    spans
}

fn alnum_run_len(s: &str) -> usize {
    s.char_indices()
        .find(|(_, c)| !c.is_alphanumeric())
        .map_or(s.len(), |(idx, _)| idx)
}

fn is_cryptic(word: &str) -> bool {
    let (mut len, mut digits, mut letters) = (0, 0, 0);
    for c in word.chars() {
        len += 1;
        if c.is_numeric() {
            digits += 1;
        } else if c.is_alphabetic() {
            letters += 1;
        }
    }
    len >= 6 && digits >= 2 && letters >= 2
}

/// Lightweight suffix stripping (plurals, -ed, -ing), applied to a fixed
/// point so that stemming is idempotent.
pub fn stem(word: &str) -> String {
    let mut current = word.to_string();
    loop {
        let next = stem_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn stem_once(word: &str) -> String {
    if word.chars().count() <= 3 || !word.chars().all(|c| c.is_alphabetic()) {
        return word.to_string();
    }
    let w = strip_plural(word);
    if w != word {
        return w;
    }
    for suffix in ["ing", "ed"] {
        if let Some(base) = w.strip_suffix(suffix) {
            if base.chars().count() >= 3 && base.chars().any(is_vowel) {
                return restore_base(base);
            }
        }
    }
    w
}

fn strip_plural(word: &str) -> String {
    if let Some(base) = word.strip_suffix("ies") {
        if base.chars().count() >= 2 {
            return format!("{base}y");
        }
    }
    for suffix in ["sses", "xes", "ches", "shes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.ends_with('s') && !["ss", "us", "is"].iter().any(|s| word.ends_with(s)) {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

fn restore_base(base: &str) -> String {
    if ["at", "bl", "iz"].iter().any(|s| base.ends_with(s)) {
        return format!("{base}e");
    }
    let chars: Vec<char> = base.chars().collect();
    if let [.., a, b] = chars.as_slice() {
        if a == b && !is_vowel(*a) && !matches!(a, 'l' | 's' | 'z') {
            return chars[..chars.len() - 1].iter().collect();
        }
    }
    base.to_string()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Parses a one-entry-per-line lexicon. Blank lines and `#` comments are
/// skipped; entries are lowercased.
pub fn parse_lexicon(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_lexicon(path: impl AsRef<Path>) -> io::Result<BTreeSet<String>> {
    Ok(parse_lexicon(&fs::read_to_string(path)?))
}

fn stem_lexicon(words: BTreeSet<String>) -> BTreeSet<String> {
    words.iter().map(|w| stem(&w.to_lowercase())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Noun,
    Verb,
    Adj,
    Particle,
    Other,
}

/// Tokenizer and phrase chunker configuration with its lexicons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPipeline {
    stopwords: BTreeSet<String>,
    verbs: BTreeSet<String>,
    adjectives: BTreeSet<String>,
    particles: BTreeSet<String>,
    stem: bool,
    max_phrase_len: usize,
}

impl Default for TextPipeline {
    fn default() -> Self {
        Self::new(
            parse_lexicon(STOPWORDS),
            parse_lexicon(VERBS),
            parse_lexicon(ADJECTIVES),
            parse_lexicon(PARTICLES),
        )
    }
}

impl TextPipeline {
    pub fn new(
        stopwords: BTreeSet<String>,
        verbs: BTreeSet<String>,
        adjectives: BTreeSet<String>,
        particles: BTreeSet<String>,
    ) -> Self {
        Self {
            stopwords,
            verbs: stem_lexicon(verbs),
            adjectives: stem_lexicon(adjectives),
            particles: stem_lexicon(particles),
            stem: true,
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
        }
    }

    /// Loads `stopwords.txt`, `verbs.txt`, `adjectives.txt` and
    /// `particles.txt` from a directory. Missing files fall back to the
    /// bundled lists.
    pub fn from_resource_dir(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str, fallback: &str| -> io::Result<BTreeSet<String>> {
            let path = dir.join(name);
            if path.exists() {
                load_lexicon(path)
            } else {
                Ok(parse_lexicon(fallback))
            }
        };
        Ok(Self::new(
            read("stopwords.txt", STOPWORDS)?,
            read("verbs.txt", VERBS)?,
            read("adjectives.txt", ADJECTIVES)?,
            read("particles.txt", PARTICLES)?,
        ))
    }

    pub fn with_stemming(mut self, stem: bool) -> Self {
        self.stem = stem;
        self
    }

    pub fn with_max_phrase_len(mut self, max: usize) -> Self {
        self.max_phrase_len = max.max(1);
        self
    }

    pub fn max_phrase_len(&self) -> usize {
        self.max_phrase_len
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }

    /// Splits on whitespace and punctuation, lowercases, drops stopwords and
    /// single letters, stems words, and keeps code terms atomic.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        let mut cursor = 0;
        for span in detect_code_terms(text) {
            self.push_words(&text[cursor..span.start], &mut tokens);
            let surface = &text[span.start..span.end];
            tokens.push(Token {
                surface: surface.to_string(),
                normalized: surface.to_lowercase(),
                kind: TokenKind::CodeTerm,
                position: tokens.len(),
            });
            cursor = span.end;
        }
        self.push_words(&text[cursor..], &mut tokens);
        tokens
    }

    fn push_words(&self, segment: &str, out: &mut Vec<Token>) {
        for word in segment
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            let lower = word.to_lowercase();
            let is_number = lower.chars().all(char::is_numeric);
            if self.stopwords.contains(&lower) || (!is_number && lower.chars().count() < 2) {
                continue;
            }
            let (kind, normalized) = if is_number {
                (TokenKind::Number, lower)
            } else if self.stem {
                (TokenKind::Word, stem(&lower))
            } else {
                (TokenKind::Word, lower)
            };
            if self.stopwords.contains(&normalized) {
                continue;
            }
            out.push(Token {
                surface: word.to_string(),
                normalized,
                kind,
                position: out.len(),
            });
        }
    }

    /// Normalized terms of `text`, in order.
    pub fn terms(&self, text: &str) -> Vec<String> {
        self.tokenize(text)
            .into_iter()
            .map(|t| t.normalized)
            .collect()
    }

    fn tag(&self, token: &Token) -> Tag {
        if token.kind != TokenKind::Word {
            return Tag::Other;
        }
        // lexicons are stored stemmed
        let stemmed;
        let w = if self.stem {
            token.normalized.as_str()
        } else {
            stemmed = stem(&token.normalized);
            stemmed.as_str()
        };
        if self.verbs.contains(w) {
            Tag::Verb
        } else if self.adjectives.contains(w) {
            Tag::Adj
        } else if self.particles.contains(w) {
            Tag::Particle
        } else {
            Tag::Noun
        }
    }

    /// Pattern chunking over lexicon tags (unknown words are nouns):
    /// maximal `Adj* Noun+` runs become noun phrases, `Verb (Particle|Noun)?`
    /// becomes a verb phrase. Noun runs longer than the configured maximum
    /// are cut into pieces from the right.
    pub fn extract_phrases(&self, tokens: &[Token]) -> Vec<Phrase> {
        let tags: Vec<Tag> = tokens.iter().map(|t| self.tag(t)).collect();
        let mut phrases = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match tags[i] {
                Tag::Verb => {
                    let mut end = i + 1;
                    if self.max_phrase_len >= 2
                        && matches!(tags.get(i + 1), Some(Tag::Particle | Tag::Noun))
                    {
                        end += 1;
                    }
                    phrases.push(Phrase {
                        tokens: tokens[i..end].to_vec(),
                        kind: PhraseKind::VerbPhrase,
                    });
                    i = end;
                }
                Tag::Adj | Tag::Noun => {
                    let mut nouns_from = i;
                    while nouns_from < tokens.len() && tags[nouns_from] == Tag::Adj {
                        nouns_from += 1;
                    }
                    let mut end = nouns_from;
                    while end < tokens.len() && tags[end] == Tag::Noun {
                        end += 1;
                    }
                    if end > nouns_from {
                        self.push_noun_pieces(tokens, &tags, i, end, &mut phrases);
                    }
                    i = end;
                }
                Tag::Particle | Tag::Other => i += 1,
            }
        }
        phrases
    }

    fn push_noun_pieces(
        &self,
        tokens: &[Token],
        tags: &[Tag],
        start: usize,
        end: usize,
        out: &mut Vec<Phrase>,
    ) {
        let mut pieces = Vec::new();
        let mut hi = end;
        while hi > start {
            let lo = hi.saturating_sub(self.max_phrase_len).max(start);
            if tags[lo..hi].contains(&Tag::Noun) {
                pieces.push(Phrase {
                    tokens: tokens[lo..hi].to_vec(),
                    kind: PhraseKind::NounPhrase,
                });
            }
            hi = lo;
        }
        pieces.reverse();
        out.extend(pieces);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Tf,
    TfIdf,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorizeError {
    #[error("tf-idf weighting requested without an idf table")]
    MissingIdfTable,
}

/// Sparse vector with strictly increasing term ids and no stored zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Sums duplicate ids and drops zero weights.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(id, _)| id);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(pairs.len());
        for (id, w) in pairs {
            match entries.last_mut() {
                Some((last, acc)) if *last == id => *acc += w,
                _ => entries.push((id, w)),
            }
        }
        entries.retain(|&(_, w)| w != 0.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: u32) -> f64 {
        self.entries
            .binary_search_by_key(&id, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> SparseVector {
        let norm = self.norm();
        if norm == 0.0 {
            return self.clone();
        }
        SparseVector {
            entries: self.entries.iter().map(|&(i, w)| (i, w / norm)).collect(),
        }
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (self.dot(other) / denom).min(1.0)
        }
    }
}

/// Natural-log inverse document frequency per vocabulary id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    doc_count: usize,
    doc_freq: Vec<u32>,
    idf: Vec<f64>,
}

impl IdfTable {
    /// `docs` yields, per document, the vocabulary ids it contains (repeats
    /// allowed).
    pub fn from_documents<'a, I>(vocab_size: usize, docs: I) -> Self
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let mut doc_freq = vec![0u32; vocab_size];
        let mut doc_count = 0;
        let mut seen = vec![usize::MAX; vocab_size];
        for (d, ids) in docs.into_iter().enumerate() {
            doc_count += 1;
            for &id in ids {
                let slot = &mut seen[id as usize];
                if *slot != d {
                    *slot = d;
                    doc_freq[id as usize] += 1;
                }
            }
        }
        Self::from_frequencies(doc_count, doc_freq)
    }

    pub fn from_frequencies(doc_count: usize, doc_freq: Vec<u32>) -> Self {
        let idf = doc_freq
            .iter()
            .map(|&df| {
                if df == 0 {
                    0.0
                } else {
                    (doc_count as f64 / df as f64).ln()
                }
            })
            .collect();
        Self {
            doc_count,
            doc_freq,
            idf,
        }
    }

    pub fn idf(&self, id: u32) -> f64 {
        self.idf.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq.get(id as usize).copied().unwrap_or(0)
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn len(&self) -> usize {
        self.idf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idf.is_empty()
    }
}

/// Raw-count or tf-idf vector of `terms` over `vocab`. Out-of-vocabulary
/// terms are dropped.
pub fn vectorize<I, S>(
    terms: I,
    vocab: &Vocabulary,
    weighting: Weighting,
    idf: Option<&IdfTable>,
) -> Result<SparseVector, VectorizeError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let idf = match (weighting, idf) {
        (Weighting::TfIdf, None) => return Err(VectorizeError::MissingIdfTable),
        (Weighting::TfIdf, Some(table)) => Some(table),
        (Weighting::Tf, _) => None,
    };
    let counts = terms
        .into_iter()
        .filter_map(|t| vocab.id(t.as_ref()))
        .map(|id| (id, 1.0))
        .collect();
    let tf = SparseVector::from_pairs(counts);
    Ok(match idf {
        None => tf,
        Some(table) => SparseVector::from_pairs(
            tf.entries
                .iter()
                .map(|&(id, count)| (id, count * table.idf(id)))
                .collect(),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normalized(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.normalized.as_str()).collect()
    }

    #[test]
    fn tokenize_drops_stopwords_and_lowercases() {
        let p = TextPipeline::default();
        let tokens = p.tokenize("Login Failure on page");
        assert_eq!(normalized(&tokens), ["login", "failure", "page"]);
        assert!(tokens.iter().all(|t| t.kind == TokenKind::Word));
        assert_eq!(
            tokens.iter().map(|t| t.position).collect::<Vec<_>>(),
            [0, 1, 2]
        );
        assert!(p.tokenize("").is_empty());
    }

    #[test]
    fn enclosed_code_term_is_atomic() {
        let p = TextPipeline::default();
        let tokens = p.tokenize("#*ZX12*# reset");
        assert_eq!(tokens.len(), 2);
        assert_eq!(tokens[0].kind, TokenKind::CodeTerm);
        assert_eq!(tokens[0].surface, "#*ZX12*#");
        assert_eq!(tokens[1].normalized, "reset");
    }

    #[test]
    fn code_term_spans() {
        assert_eq!(
            detect_code_terms("#ABCDD11759"),
            vec![Span { start: 0, end: 11 }]
        );
        assert!(detect_code_terms("password reset failed").is_empty());
        assert_eq!(
            detect_code_terms("JSP045ABCD and login"),
            vec![Span { start: 0, end: 10 }]
        );
    }

    #[test]
    fn cryptic_sample_line() {
        let text = "Kfeil: JSP045ABCD #ABCDD11759 [(231630 07/32/15), (0AAAAAAAAAAXXZW2M2U)]. ABCD1168 (#J137891)";
        let found: Vec<&str> = detect_code_terms(text)
            .iter()
            .map(|s| &text[s.start..s.end])
            .collect();
        assert_eq!(
            found,
            ["JSP045ABCD", "#ABCDD11759", "0AAAAAAAAAAXXZW2M2U", "ABCD1168", "#J137891"]
        );
    }

    #[test]
    fn unclosed_marker_is_not_a_region() {
        assert!(detect_code_terms("#* open ended").is_empty());
        assert!(detect_code_terms("#**#").is_empty());
    }

    #[test]
    fn stemming() {
        assert_eq!(stem("issues"), "issue");
        assert_eq!(stem("failed"), "fail");
        assert_eq!(stem("processing"), "process");
        assert_eq!(stem("processes"), "process");
        assert_eq!(stem("updated"), "update");
        assert_eq!(stem("stopped"), "stop");
        assert_eq!(stem("queries"), "query");
        assert_eq!(stem("access"), "access");
        assert_eq!(stem("status"), "status");
        assert_eq!(stem("failure"), "failure");
    }

    #[test]
    fn noun_run_becomes_one_phrase() {
        let p = TextPipeline::default();
        let phrases = p.extract_phrases(&p.tokenize("page access issue"));
        assert_eq!(phrases.len(), 1);
        assert_eq!(phrases[0].text(), "page access issue");
        assert_eq!(phrases[0].kind, PhraseKind::NounPhrase);
        assert!(p.extract_phrases(&[]).is_empty());
    }

    #[test]
    fn verb_noun_phrase() {
        let p = TextPipeline::default();
        let phrases = p.extract_phrases(&p.tokenize("reset password"));
        assert_eq!(phrases.len(), 1);
        assert_eq!(phrases[0].text(), "reset password");
        assert_eq!(phrases[0].kind, PhraseKind::VerbPhrase);
    }

    #[test]
    fn adjectives_lead_noun_phrases() {
        let p = TextPipeline::default();
        let phrases = p.extract_phrases(&p.tokenize("invalid session token, 42 unable"));
        let texts: Vec<String> = phrases.iter().map(Phrase::text).collect();
        assert_eq!(texts, ["invalid session token"]);
    }

    #[test]
    fn long_noun_runs_are_split_from_the_right() {
        let p = TextPipeline::default().with_max_phrase_len(2);
        let phrases = p.extract_phrases(&p.tokenize("alpha beta gamma delta epsilon"));
        let texts: Vec<String> = phrases.iter().map(Phrase::text).collect();
        assert_eq!(texts, ["alpha", "beta gamma", "delta epsilon"]);
    }

    #[test]
    fn vectorize_counts() {
        let vocab = Vocabulary::from(vec!["a".to_string(), "b".to_string()]);
        let v = vectorize(["a", "a", "b"], &vocab, Weighting::Tf, None).unwrap();
        assert_eq!(v.entries(), &[(0, 2.0), (1, 1.0)]);
        let empty: [&str; 0] = [];
        assert!(vectorize(empty, &vocab, Weighting::Tf, None)
            .unwrap()
            .is_empty());
        assert_eq!(
            vectorize(["a"], &vocab, Weighting::TfIdf, None),
            Err(VectorizeError::MissingIdfTable)
        );
    }

    #[test]
    fn term_in_every_document_has_zero_tfidf() {
        let vocab = Vocabulary::from(vec!["a".to_string()]);
        let docs: Vec<Vec<u32>> = vec![vec![0], vec![0]];
        let idf = IdfTable::from_documents(1, docs.iter().map(Vec::as_slice));
        let v = vectorize(["a"], &vocab, Weighting::TfIdf, Some(&idf)).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn idf_is_natural_log() {
        let docs: Vec<Vec<u32>> = vec![vec![0, 0, 1], vec![1], vec![1, 2]];
        let idf = IdfTable::from_documents(3, docs.iter().map(Vec::as_slice));
        assert_eq!(idf.doc_freq(0), 1);
        assert_eq!(idf.doc_freq(1), 3);
        assert!((idf.idf(0) - 3f64.ln()).abs() < 1e-15);
        assert_eq!(idf.idf(1), 0.0);
        assert!((idf.idf(2) - 3f64.ln()).abs() < 1e-15);
    }

    fn word_soup() -> impl Strategy<Value = String> {
        let atoms = prop_oneof![
            "[a-zA-Z]{1,9}",
            "[0-9]{1,4}",
            "[A-Z]{2,4}[0-9]{2,5}",
            Just("#*ZZ 9*#".to_string()),
            Just("#J137891".to_string()),
            Just("the".to_string()),
            Just("processes".to_string()),
            Just("stopped".to_string()),
        ];
        let seps = prop::sample::select(vec![" ", ", ", ". ", "/", "-", "  ", "(", ")"]);
        prop::collection::vec((atoms, seps), 0..20).prop_map(|parts| {
            parts
                .into_iter()
                .map(|(a, s)| format!("{a}{s}"))
                .collect::<String>()
        })
    }

    proptest! {
        #[test]
        fn retokenizing_joined_output_is_stable(text in word_soup()) {
            let p = TextPipeline::default();
            let first = p.tokenize(&text);
            let joined = join_normalized(&first);
            let second = p.tokenize(&joined);
            prop_assert_eq!(normalized(&first), normalized(&second));
            let kinds: Vec<_> = first.iter().map(|t| t.kind).collect();
            let kinds2: Vec<_> = second.iter().map(|t| t.kind).collect();
            prop_assert_eq!(kinds, kinds2);
        }

        #[test]
        fn code_spans_sorted_and_disjoint(text in word_soup()) {
            let spans = detect_code_terms(&text);
            for pair in spans.windows(2) {
                prop_assert!(pair[0].end <= pair[1].start);
            }
            for s in &spans {
                prop_assert!(s.start < s.end);
            }
        }

        #[test]
        fn tf_vector_preserves_mass(text in word_soup()) {
            let p = TextPipeline::default();
            let terms = p.terms(&text);
            // vocabulary over half the terms so some are out of vocabulary
            let vocab = Vocabulary::from(terms.iter().step_by(2).cloned().collect::<Vec<_>>());
            let v = vectorize(&terms, &vocab, Weighting::Tf, None).unwrap();
            let in_vocab = terms.iter().filter(|t| vocab.id(t).is_some()).count();
            prop_assert_eq!(v.sum(), in_vocab as f64);
            for pair in v.entries().windows(2) {
                prop_assert!(pair[0].0 < pair[1].0);
            }
        }

        #[test]
        fn stemming_is_idempotent(word in "[a-z]{1,12}") {
            let once = stem(&word);
            prop_assert_eq!(stem(&once), once.clone());
        }
    }
}
