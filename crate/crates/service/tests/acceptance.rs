//! Prints one PASS or FAIL line per acceptance criterion and exits non-zero
//! if any fails. Run with `cargo test --test acceptance`.

mod common;

#[allow(dead_code)]
#[path = "../../core/tests/classifier.rs"]
mod classifier;
#[allow(dead_code)]
#[path = "../../core/tests/evaluation.rs"]
mod evaluation;
#[allow(dead_code)]
#[path = "../../core/tests/ingest_store.rs"]
mod ingest_store;
#[allow(dead_code)]
#[path = "../../core/tests/retrieval.rs"]
mod retrieval;
#[allow(dead_code)]
#[path = "../../core/tests/themes.rs"]
mod themes;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{stderr, tickscope, write_fixture};

type Check = fn();

const CRITERIA: [(&str, &[Check]); 12] = [
    ("ranking matches brute-force cosine scan", &[retrieval::search_matches_brute_force_scan]),
    ("self-retrieval at rank 1", &[retrieval::every_ticket_retrieves_itself_first]),
    ("banding totality", &[retrieval::banding_is_total_over_random_scores]),
    (
        "classifier sanity under stratified cross-validation",
        &[
            classifier::disjoint_vocabularies_are_separated_under_cross_validation,
            classifier::folds_partition_and_pool_rare_labels,
        ],
    ),
    (
        "feedback monotonicity and bit-exact replay",
        &[classifier::verdicts_move_only_the_judged_label, classifier::logged_feedback_replays_bit_exactly],
    ),
    ("svd orthonormality, energy and reconstruction", &[themes::svd_of_random_50_by_80_matrices]),
    (
        "lda normalization, determinism and separation",
        &[themes::lda_distributions_are_normalized_and_seeded, themes::lda_separates_two_disjoint_subcorpora],
    ),
    (
        "greedy coverage protocol",
        &[
            themes::greedy_coverage_matches_hand_simulation,
            themes::coverage_target_is_reported_exactly_when_achievable,
        ],
    ),
    ("theme recall protocol", &[themes::recall_of_top_50_matches_hand_count]),
    ("pearson correlation", &[evaluation::pearson_reference_cases]),
    ("precision at k protocol", &[evaluation::precision_at_five_over_two_queries]),
    (
        "ingest round-trip and quarantine completeness",
        &[
            ingest_store::persisted_corpus_and_index_load_hash_identical,
            ingest_store::rows_without_text_are_quarantined_not_dropped,
        ],
    ),
];

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else {
        "panicked".to_string()
    }
}

fn cli_smoke() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path();
    let file = write_fixture(data, 400, 17);
    let judgments = data.join("judgments.csv");
    std::fs::write(&judgments, "q1,M00001,relevant\nq1,M00002,related\nq1,M00003,irrelevant\nq2,M00004,relevant\n")
        .unwrap();
    let steps: Vec<Vec<&str>> = vec![
        vec!["ingest", file.to_str().unwrap(), "--seed", "11"],
        vec!["search", "--query", "invoice refund failed", "--top", "5"],
        vec!["recommend", "assignee", "--summary", "printer toner empty", "--description", "tray jammed"],
        vec!["recommend", "business-process", "--ticket", "M00010", "--learner", "kernel"],
        vec![
            "feedback", "--event-id", "smoke-1", "--ticket", "M00010", "--target", "assignee", "--label",
            "devices-team", "--verdict", "accepted",
        ],
        vec!["themes", "--method", "LSA+TF", "--seed", "3", "--top-n", "15"],
        vec!["evaluate", "cv", "--seed", "5"],
        vec!["evaluate", "precision-at-k", "--judgments", judgments.to_str().unwrap(), "--k", "5"],
        vec!["evaluate", "correlation", "--seed", "5", "--holdout-last", "80"],
    ];
    for args in &steps {
        let out = tickscope(data, args);
        assert_eq!(out.status.code(), Some(0), "{} failed: {}", args[0], stderr(&out));
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let smoke: (&str, &[Check]) = ("end-to-end smoke via the command line", &[cli_smoke]);
    for (i, (name, checks)) in CRITERIA.iter().chain(std::iter::once(&smoke)).enumerate() {
        let started = Instant::now();
        let outcome = checks
            .iter()
            .try_for_each(|check| catch_unwind(AssertUnwindSafe(check)).map_err(panic_text));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {}", i + 1, why.replace('\n', " "));
            }
        }
    }
    println!("{} of {} acceptance criteria passed", 13 - failed, 13);
    if failed > 0 {
        std::process::exit(1);
    }
}
