//! Evaluation harness: stratified k-fold cross-validation with macro P/R/F1,
//! accuracy against logged assignments, precision@k over judgment files and
//! the per-label count/accuracy correlation study.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{
    labeled_examples, train_on, ClassifyError, FeatureSpace, Recommendation, TargetField,
    TrainConfig,
};
use crate::model::Corpus;

pub const DEFAULT_FOLDS: usize = 10;
pub const MIN_HOLDOUT: usize = 30;
pub const POOLED_LABEL: &str = "other";

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "code")]
pub enum EvalError {
    #[error("need at least {required} labeled tickets, found {found}")]
    TooFewExamples { found: usize, required: usize },
    #[error("holdout has {found} tickets, at least {required} are required")]
    HoldoutTooSmall { found: usize, required: usize },
    #[error("ticket {id:?} is not in the corpus")]
    UnknownTicket { id: String },
    #[error("series lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 points, got {found}")]
    TooShort { found: usize },
    #[error("a series is constant, correlation is undefined")]
    ConstantSeries,
    #[error("fold count must be at least 2")]
    BadFoldCount,
    #[error("k must be at least 1")]
    BadK,
    #[error("no judged queries")]
    NoQueries,
    #[error("query {query:?} has {len} judged results, more than k = {k}")]
    ListTooLong { query: String, len: usize, k: usize },
    #[error("query {query:?}: relevant {relevant} > relevant-or-related {relevant_or_related}, or the latter exceeds k = {k}")]
    InconsistentCounts {
        query: String,
        relevant: usize,
        relevant_or_related: usize,
        k: usize,
    },
    #[error("judgment line {line}: {detail}")]
    BadJudgmentLine { line: usize, detail: String },
    #[error("training failed: {0}")]
    Training(ClassifyError),
}

impl From<ClassifyError> for EvalError {
    fn from(e: ClassifyError) -> Self {
        EvalError::Training(e)
    }
}

/// Deals items into `k` folds stratified by label. Labels with fewer than
/// `k` items are pooled into one group first. Within each group items are
/// shuffled, then all groups are dealt round-robin in label order, so fold
/// sizes differ by at most one.
pub fn stratified_folds<S: AsRef<str>>(labels: &[S], k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k >= 1);
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_ref()).or_default().push(i);
    }
    let mut pooled = Vec::new();
    let mut strata: Vec<Vec<usize>> = Vec::new();
    for (_, members) in groups {
        if members.len() < k {
            pooled.extend(members);
        } else {
            strata.push(members);
        }
    }
    if !pooled.is_empty() {
        pooled.sort_unstable();
        strata.push(pooled);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        for i in stratum {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub target_field: TargetField,
    pub folds: Vec<FoldMetrics>,
    pub fold_members: Vec<Vec<String>>,
    pub per_label: Vec<LabelMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub label_count: usize,
    pub corpus_size: usize,
    pub seed: u64,
    pub averaging: String,
    pub train_config: TrainConfig,
    pub corpus_version: String,
}

/// Per-label precision, recall and F1 from (truth, prediction) pairs over
/// the union of true and predicted labels. Undefined ratios count as 0.
pub fn label_metrics(pairs: &[(&str, &str)]) -> Vec<LabelMetrics> {
    let labels: BTreeSet<&str> = pairs.iter().flat_map(|&(t, p)| [t, p]).collect();
    labels
        .into_iter()
        .map(|label| {
            let support = pairs.iter().filter(|(t, _)| *t == label).count();
            let predicted = pairs.iter().filter(|(_, p)| *p == label).count();
            let hits = pairs.iter().filter(|(t, p)| *t == label && *p == label).count();
            let precision = ratio(hits, predicted);
            let recall = ratio(hits, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            LabelMetrics {
                label: label.to_string(),
                support,
                predicted,
                precision,
                recall,
                f1,
            }
        })
        .collect()
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn macro_of(metrics: &[LabelMetrics]) -> (f64, f64, f64) {
    (
        mean(metrics.iter().map(|m| m.precision)),
        mean(metrics.iter().map(|m| m.recall)),
        mean(metrics.iter().map(|m| m.f1)),
    )
}

/// Stratified k-fold cross-validation of the linear classifier. Each fold
/// is predicted by a model trained on the other folds; macro metrics are
/// means of per-label values over all out-of-fold predictions.
pub fn cross_validate(
    corpus: &Corpus,
    target: TargetField,
    folds: usize,
    config: &TrainConfig,
) -> Result<CvReport, EvalError> {
    if folds < 2 {
        return Err(EvalError::BadFoldCount);
    }
    let all: Vec<usize> = (0..corpus.len()).collect();
    let examples = labeled_examples(corpus, &all, target, config);
    if examples.len() < folds {
        return Err(EvalError::TooFewExamples {
            found: examples.len(),
            required: folds,
        });
    }
    let labels: Vec<&str> = examples
        .iter()
        .map(|&i| target.label_of(&corpus.tickets()[i]))
        .collect();
    let assignment = stratified_folds(&labels, folds, config.seed);
    let features = FeatureSpace::new(corpus);

    let mut predictions: Vec<Option<String>> = vec![None; examples.len()];
    let mut fold_metrics = Vec::with_capacity(folds);
    for (f, test) in assignment.iter().enumerate() {
        let in_test: BTreeSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = (0..examples.len())
            .filter(|j| !in_test.contains(j))
            .map(|j| examples[j])
            .collect();
        let model = train_on(&features, &train, target, config)?;
        let mut pairs = Vec::with_capacity(test.len());
        for &j in test {
            let rec = model.predict(&features, &corpus.tickets()[examples[j]], None)?;
            let top = rec.top().unwrap_or_default().to_string();
            predictions[j] = Some(top);
        }
        for &j in test {
            pairs.push((labels[j], predictions[j].as_deref().unwrap()));
        }
        let per_label = label_metrics(&pairs);
        let (p, r, f1) = macro_of(&per_label);
        fold_metrics.push(FoldMetrics {
            fold: f,
            size: test.len(),
            precision: p,
            recall: r,
            f1,
            accuracy: ratio(pairs.iter().filter(|(t, p)| t == p).count(), pairs.len()),
        });
    }

    let pairs: Vec<(&str, &str)> = labels
        .iter()
        .zip(&predictions)
        .map(|(&t, p)| (t, p.as_deref().unwrap()))
        .collect();
    let per_label = label_metrics(&pairs);
    let (macro_precision, macro_recall, macro_f1) = macro_of(&per_label);
    Ok(CvReport {
        target_field: target,
        folds: fold_metrics,
        fold_members: assignment
            .iter()
            .map(|f| {
                f.iter()
                    .map(|&j| corpus.tickets()[examples[j]].id.clone())
                    .collect()
            })
            .collect(),
        macro_precision,
        macro_recall,
        macro_f1,
        accuracy: ratio(pairs.iter().filter(|(t, p)| t == p).count(), pairs.len()),
        label_count: labels.iter().collect::<BTreeSet<_>>().len(),
        per_label,
        corpus_size: examples.len(),
        seed: config.seed,
        averaging: "macro".into(),
        train_config: config.clone(),
        corpus_version: corpus.content_hash().0,
    })
}

/// Fraction of items whose true label is among the first `k` ranked labels.
pub fn top_k_accuracy<S: AsRef<str>>(predictions: &[Recommendation], truth: &[S], k: usize) -> f64 {
    assert_eq!(predictions.len(), truth.len());
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(rec, t)| rec.ranked.iter().take(k).any(|r| r.label == t.as_ref()))
        .count();
    ratio(hits, predictions.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub label: String,
    pub training_count: usize,
    pub holdout_count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub target_field: TargetField,
    pub holdout_size: usize,
    /// Top-k accuracy for k = 1, 3 and 5.
    pub top_k: BTreeMap<usize, f64>,
    pub per_label: Vec<LabelAccuracy>,
    pub train_size: usize,
    pub seed: u64,
}

impl AccuracyReport {
    pub fn top1(&self) -> f64 {
        self.top_k[&1]
    }
}

/// Trains on the corpus minus `holdout` and scores rank-1 (and top-3/5)
/// predictions against the logged labels of the holdout tickets.
pub fn accuracy_against_log(
    corpus: &Corpus,
    target: TargetField,
    holdout: &[String],
    config: &TrainConfig,
) -> Result<AccuracyReport, EvalError> {
    let mut held = BTreeSet::new();
    for id in holdout {
        let pos = corpus
            .position(id)
            .ok_or_else(|| EvalError::UnknownTicket { id: id.clone() })?;
        held.insert(pos);
    }
    let held: Vec<usize> = held.into_iter().collect();
    let labeled_holdout: Vec<usize> = held
        .iter()
        .copied()
        .filter(|&i| !target.label_of(&corpus.tickets()[i]).is_empty())
        .collect();
    if labeled_holdout.len() < MIN_HOLDOUT {
        return Err(EvalError::HoldoutTooSmall {
            found: labeled_holdout.len(),
            required: MIN_HOLDOUT,
        });
    }
    let held_set: BTreeSet<usize> = held.iter().copied().collect();
    let train: Vec<usize> = (0..corpus.len()).filter(|i| !held_set.contains(i)).collect();
    let features = FeatureSpace::new(corpus);
    let model = train_on(&features, &train, target, config)?;

    let mut predictions = Vec::with_capacity(labeled_holdout.len());
    let mut truth = Vec::with_capacity(labeled_holdout.len());
    for &i in &labeled_holdout {
        let ticket = &corpus.tickets()[i];
        predictions.push(model.predict(&features, ticket, None)?);
        truth.push(target.label_of(ticket));
    }
    let top_k = [1, 3, 5]
        .into_iter()
        .map(|k| (k, top_k_accuracy(&predictions, &truth, k)))
        .collect();

    let trained = labeled_examples(corpus, &train, target, config);
    let mut per: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for &i in &trained {
        per.entry(target.label_of(&corpus.tickets()[i])).or_default().0 += 1;
    }
    for (rec, t) in predictions.iter().zip(&truth) {
        let slot = per.entry(t).or_default();
        slot.1 += 1;
        if rec.top() == Some(*t) {
            slot.2 += 1;
        }
    }
    let per_label = per
        .into_iter()
        .map(|(label, (training_count, holdout_count, correct))| LabelAccuracy {
            label: label.to_string(),
            training_count,
            holdout_count,
            correct,
            accuracy: ratio(correct, holdout_count),
        })
        .collect();
    Ok(AccuracyReport {
        target_field: target,
        holdout_size: labeled_holdout.len(),
        top_k,
        per_label,
        train_size: trained.len(),
        seed: config.seed,
    })
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort { found: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStudy {
    pub target_field: TargetField,
    /// Labels with at least one holdout ticket.
    pub pairs: Vec<LabelAccuracy>,
    pub r: Option<f64>,
    /// Why `r` is missing, when it is.
    pub note: Option<String>,
}

impl CorrelationStudy {
    /// Correlates training counts with accuracies of the given labels.
    pub fn from_pairs(target: TargetField, pairs: Vec<LabelAccuracy>) -> Self {
        let x: Vec<f64> = pairs.iter().map(|p| p.training_count as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.accuracy).collect();
        let (r, note) = match pearson(&x, &y) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            target_field: target,
            pairs,
            r,
            note,
        }
    }
}

/// Per-label training count against holdout accuracy, with Pearson r.
pub fn correlation_study(
    corpus: &Corpus,
    target: TargetField,
    holdout: &[String],
    config: &TrainConfig,
) -> Result<CorrelationStudy, EvalError> {
    let report = accuracy_against_log(corpus, target, holdout, config)?;
    let pairs = report
        .per_label
        .into_iter()
        .filter(|p| p.holdout_count > 0)
        .collect();
    Ok(CorrelationStudy::from_pairs(target, pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Relevant,
    Related,
    Irrelevant,
}

impl std::str::FromStr for Judgment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relevant" => Ok(Judgment::Relevant),
            "related" => Ok(Judgment::Related),
            "irrelevant" => Ok(Judgment::Irrelevant),
            other => Err(format!("unknown judgment {other:?}")),
        }
    }
}

/// Judged result lists per query, each in rank order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Judgments {
    pub queries: BTreeMap<String, Vec<(String, Judgment)>>,
}

impl Judgments {
    /// Parses `query-id, ticket-id, judgment` lines. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut queries: BTreeMap<String, Vec<(String, Judgment)>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |detail: String| EvalError::BadJudgmentLine {
                line: n + 1,
                detail,
            };
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let [query, ticket, judgment] = parts[..] else {
                return Err(bad(format!("expected 3 fields, got {}", parts.len())));
            };
            if query.is_empty() || ticket.is_empty() {
                return Err(bad("empty query or ticket id".into()));
            }
            let judgment: Judgment = judgment.parse().map_err(bad)?;
            queries
                .entry(query.to_string())
                .or_default()
                .push((ticket.to_string(), judgment));
        }
        Ok(Self { queries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub query: String,
    pub relevant: usize,
    pub relevant_or_related: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAtK {
    pub k: usize,
    pub queries: Vec<QueryCounts>,
    /// Mean over queries of relevant / k.
    pub precision_relevant: f64,
    /// Mean over queries of (relevant + related) / k.
    pub precision_relevant_or_related: f64,
}

impl PrecisionAtK {
    pub fn from_counts(k: usize, queries: Vec<QueryCounts>) -> Result<Self, EvalError> {
        if k == 0 {
            return Err(EvalError::BadK);
        }
        if queries.is_empty() {
            return Err(EvalError::NoQueries);
        }
        for q in &queries {
            if q.relevant > q.relevant_or_related || q.relevant_or_related > k {
                return Err(EvalError::InconsistentCounts {
                    query: q.query.clone(),
                    relevant: q.relevant,
                    relevant_or_related: q.relevant_or_related,
                    k,
                });
            }
        }
        let k_f = k as f64;
        Ok(Self {
            k,
            precision_relevant: mean(queries.iter().map(|q| q.relevant as f64 / k_f)),
            precision_relevant_or_related: mean(
                queries.iter().map(|q| q.relevant_or_related as f64 / k_f),
            ),
            queries,
        })
    }
}

/// Precision at `k` of judged result lists; a list may be shorter than `k`
/// but not longer.
pub fn precision_at_k(judgments: &Judgments, k: usize) -> Result<PrecisionAtK, EvalError> {
    let mut counts = Vec::with_capacity(judgments.queries.len());
    for (query, list) in &judgments.queries {
        if list.len() > k {
            return Err(EvalError::ListTooLong {
                query: query.clone(),
                len: list.len(),
                k,
            });
        }
        let relevant = list.iter().filter(|(_, j)| *j == Judgment::Relevant).count();
        let related = list.iter().filter(|(_, j)| *j == Judgment::Related).count();
        counts.push(QueryCounts {
            query: query.clone(),
            relevant,
            relevant_or_related: relevant + related,
        });
    }
    PrecisionAtK::from_counts(k, counts)
}

impl CvReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "target           {}", self.target_field.as_str());
        let _ = writeln!(out, "corpus version   {}", self.corpus_version);
        let _ = writeln!(out, "seed             {}", self.seed);
        let _ = writeln!(
            out,
            "tickets          {} ({} labels, {} folds, {} averaging)",
            self.corpus_size,
            self.label_count,
            self.folds.len(),
            self.averaging
        );
        let _ = writeln!(
            out,
            "macro P/R/F1     {:.4} / {:.4} / {:.4}   accuracy {:.4}",
            self.macro_precision, self.macro_recall, self.macro_f1, self.accuracy
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>4} {:>6} {:>9} {:>9} {:>9} {:>9}", "fold", "size", "precision", "recall", "f1", "accuracy");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:>4} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                f.fold, f.size, f.precision, f.recall, f.f1, f.accuracy
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<30} {:>7} {:>9} {:>9} {:>9}", "label", "support", "precision", "recall", "f1");
        for l in &self.per_label {
            let _ = writeln!(
                out,
                "{:<30} {:>7} {:>9.4} {:>9.4} {:>9.4}",
                l.label, l.support, l.precision, l.recall, l.f1
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::RankedLabel;

    #[test]
    fn folds_of_hundred_are_ten_each() {
        let labels: Vec<String> = (0..100).map(|i| format!("L{}", i % 7)).collect();
        let folds = stratified_folds(&labels, 10, 3);
        assert!(folds.iter().all(|f| f.len() == 10));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn folds_keep_large_labels_everywhere() {
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat_n("big", 37));
        labels.extend(std::iter::repeat_n("mid", 12));
        labels.extend(std::iter::repeat_n("rare", 3));
        labels.extend(std::iter::repeat_n("once", 1));
        let folds = stratified_folds(&labels, 10, 1);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &folds {
            assert!(f.iter().any(|&i| labels[i] == "big"));
            assert!(f.iter().any(|&i| labels[i] == "mid"));
        }
        assert_eq!(stratified_folds(&labels, 10, 1), folds);
    }

    #[test]
    fn pearson_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        // sxy = 2, sxx = 2, syy = 14/3
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 1.0, 4.0]).unwrap();
        assert!((r - (3.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0; 5]).unwrap_err(), EvalError::ConstantSeries);
        assert!(matches!(pearson(&x, &[1.0]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(EvalError::TooShort { .. })));
    }

    #[test]
    fn pearson_symmetry_and_affine_invariance() {
        let x = [3.0, 1.5, 7.2, 4.4, 0.3, 9.9];
        let y = [2.0, 2.5, 5.1, 3.3, 1.0, 6.0];
        let r = pearson(&x, &y).unwrap();
        assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| 4.0 * v - 17.0).collect();
        assert!((r - pearson(&scaled, &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn precision_two_queries() {
        let mut text = String::new();
        for (q, rel) in [("q1", 3), ("q2", 4)] {
            for i in 0..5 {
                let j = if i < rel { "relevant" } else { "irrelevant" };
                text.push_str(&format!("{q},T{i},{j}\n"));
            }
        }
        let p = precision_at_k(&Judgments::parse(&text).unwrap(), 5).unwrap();
        assert!((p.precision_relevant - 0.7).abs() < 1e-15);
        assert!(matches!(
            precision_at_k(&Judgments::parse(&text).unwrap(), 4),
            Err(EvalError::ListTooLong { .. })
        ));
    }

    #[test]
    fn precision_counts_are_checked() {
        let bad = PrecisionAtK::from_counts(
            5,
            vec![QueryCounts {
                query: "q".into(),
                relevant: 3,
                relevant_or_related: 2,
            }],
        );
        assert!(matches!(bad, Err(EvalError::InconsistentCounts { .. })));
        assert!(matches!(
            Judgments::parse("q1,T1,maybe"),
            Err(EvalError::BadJudgmentLine { line: 1, .. })
        ));
    }

    #[test]
    fn related_counts_toward_second_precision() {
        let j = Judgments::parse("# header\nq,T1,relevant\nq,T2,related\n\nq,T3,irrelevant\n").unwrap();
        let p = precision_at_k(&j, 5).unwrap();
        assert!((p.precision_relevant - 0.2).abs() < 1e-15);
        assert!((p.precision_relevant_or_related - 0.4).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_on_constant_holdout() {
        let rec = Recommendation {
            ranked: vec![RankedLabel {
                label: "ops".into(),
                score: 1.0,
                demoted: false,
            }],
            model_version: Some(1),
            recency_filter: None,
            learner: "constant".into(),
        };
        let preds = vec![rec; 40];
        let truth = vec!["ops"; 40];
        assert_eq!(top_k_accuracy(&preds, &truth, 1), 1.0);
    }

    #[test]
    fn independent_counts_give_zero_r() {
        // counts 10..29; accuracy pattern is symmetric around the middle
        let pairs: Vec<LabelAccuracy> = (0..20)
            .map(|i| {
                let acc = [0.2, 0.8, 0.5, 0.5, 0.8, 0.2, 0.2, 0.8, 0.5, 0.5][i.min(19 - i)];
                LabelAccuracy {
                    label: format!("L{i:02}"),
                    training_count: 10 + i,
                    holdout_count: 5,
                    correct: 0,
                    accuracy: acc,
                }
            })
            .collect();
        let study = CorrelationStudy::from_pairs(TargetField::Assignee, pairs);
        assert!(study.r.unwrap().abs() < 1e-12);

        let flat = (0..4)
            .map(|i| LabelAccuracy {
                label: format!("L{i}"),
                training_count: 10 + i,
                holdout_count: 3,
                correct: 3,
                accuracy: 1.0,
            })
            .collect();
        let degenerate = CorrelationStudy::from_pairs(TargetField::Assignee, flat);
        assert_eq!(degenerate.r, None);
        assert_eq!(degenerate.pairs.len(), 4);
        assert!(degenerate.note.is_some());
    }

    #[test]
    fn label_metrics_by_hand() {
        let pairs = [("a", "a"), ("a", "b"), ("b", "b"), ("c", "b")];
        let m = label_metrics(&pairs);
        let get = |l: &str| m.iter().find(|x| x.label == l).unwrap();
        assert_eq!(get("a").precision, 1.0);
        assert_eq!(get("a").recall, 0.5);
        assert!((get("b").precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(get("b").recall, 1.0);
        assert_eq!(get("c").f1, 0.0);
    }
}
