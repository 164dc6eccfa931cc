use std::collections::BTreeSet;
use std::time::Instant;

use chrono::Utc;
use tickscope_core::classify::{
    predict_with_kernel, replay_feedback, train, ClassifierModel, FeatureSpace, FeedbackEvent,
    KernelConfig, TargetField, TrainConfig, Verdict,
};
use tickscope_core::eval::{cross_validate, stratified_folds};
use tickscope_core::model::{Corpus, Schema, TicketRecord};
use tickscope_core::store::{ArtifactKind, Store};
use tickscope_core::synth::{disjoint_area_tickets, mixed_tickets, AREAS};
use tickscope_core::text::TextPipeline;

fn corpus_of(tickets: Vec<TicketRecord>) -> Corpus {
    Corpus::new(Schema::default_tickets(), tickets, TextPipeline::default(), Utc::now()).unwrap()
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn disjoint_vocabularies_are_separated_under_cross_validation() {
    let corpus = corpus_of(disjoint_area_tickets(200, 8, 11));
    assert_eq!(corpus.len(), 600);
    let started = Instant::now();
    let report = cross_validate(&corpus, TargetField::Assignee, 10, &TrainConfig::with_seed(5)).unwrap();
    let elapsed = started.elapsed();
    assert!(report.macro_f1 >= 0.95, "macro F1 {}", report.macro_f1);
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");

    assert_eq!(report.fold_members.len(), 10);
    let mut all = BTreeSet::new();
    for fold in &report.fold_members {
        for id in fold {
            assert!(all.insert(id.clone()), "{id} in two folds");
        }
    }
    assert_eq!(all.len(), 600);
    for fold in &report.fold_members {
        for (assignee, _, _) in AREAS {
            let n = fold
                .iter()
                .filter(|id| corpus.ticket(id).unwrap().assignee == assignee)
                .count();
            assert_eq!(n, 20, "{assignee} in fold");
        }
    }
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn folds_partition_and_pool_rare_labels() {
    let mut labels: Vec<String> = (0..95).map(|i| format!("L{}", i % 4)).collect();
    labels.extend(["rare-a", "rare-a", "rare-b", "rare-c", "rare-c"].map(String::from));
    for k in [2, 5, 10] {
        let folds = stratified_folds(&labels, k, 3);
        let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
        for l in ["L0", "L1", "L2", "L3"] {
            let counts: Vec<usize> = folds
                .iter()
                .map(|f| f.iter().filter(|&&i| labels[i] == l).count())
                .collect();
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1, "{l}: {counts:?}");
        }
    }
    assert_eq!(stratified_folds(&labels, 10, 3), stratified_folds(&labels, 10, 3));
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn training_is_deterministic_for_a_seed() {
    let corpus = corpus_of(mixed_tickets(300, 4));
    let a = train(&corpus, TargetField::BusinessProcess, &TrainConfig::with_seed(9)).unwrap();
    let b = train(&corpus, TargetField::BusinessProcess, &TrainConfig::with_seed(9)).unwrap();
    assert_eq!(a.weights(), b.weights());
    assert_eq!(a.bias(), b.bias());
    assert_eq!(a.labels(), b.labels());
}

fn event(id: &str, ticket: &TicketRecord, label: &str, verdict: Verdict) -> FeedbackEvent {
    FeedbackEvent {
        event_id: id.to_string(),
        ticket_id: ticket.id.clone(),
        target_field: TargetField::Assignee,
        label: label.to_string(),
        verdict,
        summary: ticket.summary.clone(),
        description: ticket.description.clone(),
        timestamp: Utc::now(),
    }
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn verdicts_move_only_the_judged_label() {
    let corpus = corpus_of(mixed_tickets(300, 21));
    let features = FeatureSpace::new(&corpus);
    let mut model = train(&corpus, TargetField::Assignee, &TrainConfig::with_seed(1)).unwrap();
    for (n, t) in corpus.tickets().iter().take(40).enumerate() {
        let before = model.predict(&features, t, None).unwrap();
        let label = model.labels()[n % model.labels().len()].clone();
        let verdict = if n % 2 == 0 { Verdict::Accepted } else { Verdict::Rejected };
        model.apply_feedback(&features, &event(&format!("e{n}"), t, &label, verdict)).unwrap();
        let after = model.predict(&features, t, None).unwrap();
        for l in model.labels() {
            let (b, a) = (before.score_of(l).unwrap(), after.score_of(l).unwrap());
            if *l == label {
                match verdict {
                    Verdict::Accepted => assert!(a > b, "{l}: {b} -> {a}"),
                    Verdict::Rejected => assert!(a < b, "{l}: {b} -> {a}"),
                }
            } else {
                assert_eq!(a, b);
            }
        }
    }
    assert_eq!(model.version(), 41);
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn logged_feedback_replays_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let corpus = corpus_of(mixed_tickets(200, 8));
    let features = FeatureSpace::new(&corpus);
    let base = train(&corpus, TargetField::Assignee, &TrainConfig::with_seed(2)).unwrap();
    store.persist_bytes(ArtifactKind::Model, &base.to_bytes(), Some("assignee")).unwrap();

    let mut live = base.clone();
    for (n, t) in corpus.tickets().iter().enumerate().take(60) {
        let label = AREAS[n % 3].0;
        let verdict = if n % 3 == 0 { Verdict::Rejected } else { Verdict::Accepted };
        let e = event(&format!("fb-{n:03}"), t, label, verdict);
        store.append_feedback(&e).unwrap();
        live.apply_feedback(&features, &e).unwrap();
    }
    let dup = event("fb-000", &corpus.tickets()[0], AREAS[0].0, Verdict::Accepted);
    assert!(store.append_feedback(&dup).is_err());

    let (_, bytes) = store.load_bytes(ArtifactKind::Model, None, Some("assignee")).unwrap();
    let restored = ClassifierModel::from_bytes(&bytes, features.vocab_size()).unwrap();
    let log = store.feedback_events().unwrap();
    let replay = replay_feedback(&restored, &features, &log).unwrap();
    assert_eq!(replay.applied, 60);
    assert!(replay.skipped.is_empty());
    assert_eq!(replay.model.to_bytes(), live.to_bytes());
    for t in corpus.tickets() {
        let a = replay.model.predict(&features, t, None).unwrap();
        let b = live.predict(&features, t, None).unwrap();
        assert_eq!(a, b);
    }
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn kernel_neighbours_recover_disjoint_areas() {
    let corpus = corpus_of(disjoint_area_tickets(30, 6, 3));
    let features = FeatureSpace::new(&corpus);
    let config = KernelConfig::default();
    for (a, (assignee, _, words)) in AREAS.iter().enumerate() {
        let probe = TicketRecord::new(format!("probe-{a}"), words[..4].join(" "));
        let rec = predict_with_kernel(&config, &features, &probe).unwrap();
        assert_eq!(rec.top(), Some(*assignee));
    }
}
