use std::collections::BTreeSet;

use chrono::Utc;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tickscope_core::model::{Corpus, Schema, TicketRecord};
use tickscope_core::text::TextPipeline;
use tickscope_core::themes::{
    compute_spread, evaluate_recall, fit_lda, mine_themes, recall_curve, score_lda, select_central_terms,
    truncated_svd, DenseMatrix, LdaConfig, PhraseCorpus, Ranking, SvdOptions, ThemeConfig, ThemeMethod,
};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    DenseMatrix::from_rows(&data)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_gram_error(vectors: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - want).abs());
        }
    }
    worst
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn svd_of_random_50_by_80_matrices() {
    for seed in 0..3 {
        let a = random_matrix(50, 80, seed);
        let svd = truncated_svd(&a, 50, &SvdOptions { seed, ..SvdOptions::default() }).unwrap();
        assert_eq!(svd.rank(), 50);
        assert!(max_gram_error(&svd.u) < 1e-6, "U not orthonormal");
        assert!(max_gram_error(&svd.v) < 1e-6, "V not orthonormal");
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));

        let energy: f64 = svd.s.iter().map(|s| s * s).sum();
        let fro2 = a.frobenius_norm().powi(2);
        assert!(((energy - fro2) / fro2).abs() < 1e-6, "{energy} vs {fro2}");

        let mut previous = f64::INFINITY;
        for r in 1..=50 {
            let mut err = 0.0;
            for i in 0..50 {
                for j in 0..80 {
                    err += (a.get(i, j) - svd.reconstruct(r, i, j)).powi(2);
                }
            }
            assert!(err <= previous + 1e-9, "rank {r}: {err} > {previous}");
            previous = err;
        }
        assert!(previous / fro2 < 1e-12);
    }
}

const HALF_A: [&str; 8] = [
    "printer jam", "toner cartridge", "paper tray", "print queue", "scanner driver",
    "docking station", "laptop battery", "monitor cable",
];
const HALF_B: [&str; 8] = [
    "invoice posting", "payment run", "vendor master", "tax code", "credit memo",
    "cost center", "purchase order", "general ledger",
];

fn two_halves(docs_per_half: usize, len: usize, seed: u64) -> PhraseCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::new();
    let mut tokens = Vec::new();
    let mut phrases = Vec::new();
    for (h, half) in [HALF_A, HALF_B].iter().enumerate() {
        for d in 0..docs_per_half {
            let units: Vec<Vec<String>> = (0..len)
                .map(|_| half.choose(&mut rng).unwrap().split(' ').map(String::from).collect())
                .collect();
            ids.push(format!("H{h}-{d:02}"));
            tokens.push(units.iter().flatten().cloned().collect());
            phrases.push(units);
        }
    }
    PhraseCorpus::from_parts(ids, tokens, phrases)
}

fn lda_config() -> LdaConfig {
    LdaConfig {
        topics: 2,
        sweeps: 400,
        burn_in: 100,
        ..LdaConfig::default()
    }
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn lda_distributions_are_normalized_and_seeded() {
    let pc = two_halves(20, 25, 1);
    let config = lda_config();
    let a = fit_lda(pc.doc_units(), pc.phrase_count(), &config, 42).unwrap();
    for row in a.phi.iter().chain(&a.theta) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|&p| p >= 0.0));
    }
    assert_eq!(a.phi.len(), 2);
    assert_eq!(a.theta.len(), pc.doc_count());
    let b = fit_lda(pc.doc_units(), pc.phrase_count(), &config, 42).unwrap();
    assert_eq!(a, b);
    let c = fit_lda(pc.doc_units(), pc.phrase_count(), &config, 43).unwrap();
    assert_ne!(a.phi, c.phi);
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn lda_separates_two_disjoint_subcorpora() {
    let pc = two_halves(20, 25, 7);
    let (_, model) = score_lda(&pc, &lda_config(), 3).unwrap();
    let a: BTreeSet<&str> = HALF_A.into_iter().collect();
    let b: BTreeSet<&str> = HALF_B.into_iter().collect();
    let mut sides = Vec::new();
    for topic in 0..2 {
        let top: Vec<&str> = model.top_words(topic, 5).into_iter().map(|w| pc.phrase(w)).collect();
        let side = if top.iter().all(|p| a.contains(p)) {
            "A"
        } else if top.iter().all(|p| b.contains(p)) {
            "B"
        } else {
            panic!("topic {topic} mixes halves: {top:?}");
        };
        sides.push(side);
    }
    sides.sort();
    assert_eq!(sides, ["A", "B"]);
}

/// Ten tickets; phrase `p` supports ticket `d` when `d` is listed for it.
fn incidence_fixture(rows: &[(&str, &[usize])]) -> PhraseCorpus {
    let mut tokens = vec![Vec::new(); 10];
    let mut phrases = vec![Vec::new(); 10];
    for (p, docs) in rows {
        for &d in *docs {
            tokens[d].push(p.to_string());
            phrases[d].push(vec![p.to_string()]);
        }
    }
    let ids = (0..10).map(|d| format!("C{d}")).collect();
    PhraseCorpus::from_parts(ids, tokens, phrases)
}

fn ranked(rows: &[(&str, &[usize])]) -> Ranking {
    let names: Vec<&str> = rows.iter().map(|r| r.0).collect();
    let scores: Vec<f64> = (0..rows.len()).map(|i| (rows.len() - i) as f64).collect();
    Ranking::from_scores("hand", &names, &scores)
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn greedy_coverage_matches_hand_simulation() {
    let rows: [(&str, &[usize]); 6] = [
        ("alpha", &[0, 1, 2, 3]),
        ("beta", &[0, 1]),
        ("gamma", &[4, 5, 6]),
        ("delta", &[6, 7]),
        ("epsilon", &[8]),
        ("zeta", &[9]),
    ];
    let pc = incidence_fixture(&rows);
    let sel = select_central_terms(&ranked(&rows), &pc, 0.85);
    // alpha 4/10, beta adds nothing, gamma 7/10, delta 8/10, epsilon 9/10 >= 0.85
    let picked: Vec<&str> = sel.terms.iter().map(|t| t.phrase.as_str()).collect();
    assert_eq!(picked, ["alpha", "gamma", "delta", "epsilon"]);
    assert_eq!(sel.coverage_curve, [0.4, 0.7, 0.8, 0.9]);
    assert_eq!(sel.coverage, 0.9);
    assert_eq!(sel.terms[1].fused_rank, 3);
    assert_eq!(sel.terms[2].supporting_tickets, ["C6", "C7"]);
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn coverage_target_is_reported_exactly_when_achievable() {
    let rows: [(&str, &[usize]); 4] = [
        ("alpha", &[0, 1, 2]),
        ("beta", &[1, 2]),
        ("gamma", &[3, 4, 5]),
        ("delta", &[5, 6, 7]),
    ];
    let pc = incidence_fixture(&rows);
    let sel = select_central_terms(&ranked(&rows), &pc, 0.85);
    assert_eq!(sel.coverage, 0.8);
    let picked: Vec<&str> = sel.terms.iter().map(|t| t.phrase.as_str()).collect();
    assert_eq!(picked, ["alpha", "gamma", "delta"]);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let names = ["p0", "p1", "p2", "p3", "p4", "p5"];
        let supports: Vec<Vec<usize>> = names
            .iter()
            .map(|_| (0..10).filter(|_| rng.random_bool(0.2)).collect())
            .collect();
        let rows: Vec<(&str, &[usize])> = names.iter().copied().zip(supports.iter().map(Vec::as_slice)).collect();
        let pc = incidence_fixture(&rows);
        let reachable = supports.iter().flatten().collect::<BTreeSet<_>>().len() as f64 / 10.0;
        let sel = select_central_terms(&ranked(&rows), &pc, 0.85);
        assert_eq!(sel.coverage >= 0.85, reachable >= 0.85, "{supports:?}");
        let mut last = 0.0;
        for c in &sel.coverage_curve {
            assert!(*c > last);
            last = *c;
        }
    }
}

const GOLD: [&str; 21] = [
    "printer jam", "password reset", "invoice posting failure", "vpn connection drop", "mailbox quota",
    "report export", "batch job failure", "license renewal", "disk space", "user lockout",
    "network outage", "calendar sync", "database deadlock", "backup restore", "certificate expiry",
    "monitor flicker", "payroll calculation", "shipping label", "tax code", "sso redirect",
    "browser cache",
];

const FILLER: [&str; 12] = [
    "ocean", "garden", "violet", "anchor", "pebble", "meadow", "harbor", "lantern", "orchid",
    "saddle", "thimble", "walnut",
];

fn mined_fixture() -> Vec<String> {
    let mut mined: Vec<String> = Vec::new();
    let planted = [
        (2, "printer jams"),
        (5, "password reset request"),
        (9, "invoice posting"),
        (14, "vpn drop"),
        (17, "Mailbox Quota"),
        (23, "nightly batch job failure alert"),
        (28, "renewal license"),
        (31, "user lockout"),
        (40, "restore"),
        (47, "payroll"),
    ];
    let mut filler = FILLER.iter().flat_map(|a| FILLER.iter().map(move |b| format!("{a} {b}")));
    for i in 0..50 {
        match planted.iter().find(|(p, _)| *p == i) {
            Some((_, text)) => mined.push(text.to_string()),
            None => mined.push(filler.next().unwrap()),
        }
    }
    mined
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn recall_of_top_50_matches_hand_count() {
    let pipeline = TextPipeline::default();
    let gold: Vec<String> = GOLD.iter().map(|g| g.to_string()).collect();
    let mined = mined_fixture();
    // matched: printer jam, password reset, invoice posting failure, mailbox
    // quota, batch job failure, user lockout, backup restore, payroll calculation
    let recall = evaluate_recall(&mined, &gold, &pipeline).unwrap();
    assert_eq!(recall, 8.0 / 21.0);

    let curve = recall_curve(&mined, &gold, &pipeline).unwrap();
    assert_eq!(curve.len(), 50);
    assert!(curve.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(curve[49], recall);
    assert_eq!(curve[1], 0.0);
    assert_eq!(curve[2], 1.0 / 21.0);
    assert_eq!(curve[22], 4.0 / 21.0);
    assert_eq!(curve[23], 5.0 / 21.0);
    for n in 1..=50 {
        assert_eq!(evaluate_recall(&mined[..n], &gold, &pipeline).unwrap(), curve[n - 1]);
    }
}

#[cfg_attr(not(acceptance_runner), test)]
pub fn spread_counts_tickets_reached_per_tag() {
    let mut tickets = Vec::new();
    for (i, (module, text)) in [
        ("Finance", "invoice posting failed again"),
        ("Finance", "invoice posting blocked"),
        ("Finance", "payment run late"),
        ("Hardware", "printer jam on floor two"),
        ("Hardware", "printer jam in lobby"),
        ("Hardware", "laptop battery swollen"),
        ("Hardware", "printer jam reported"),
    ]
    .into_iter()
    .enumerate()
    {
        let mut t = TicketRecord::new(format!("T{i}"), text);
        t.module_tag = module.to_string();
        tickets.push(t);
    }
    let corpus = Corpus::new(Schema::default_tickets(), tickets, TextPipeline::default(), Utc::now()).unwrap();
    let config = ThemeConfig {
        coverage_target: 0.5,
        tag_field: Some("module_tag".into()),
        ..ThemeConfig::default()
    };
    let report = mine_themes(&corpus, ThemeMethod::Tf, &config).unwrap();
    let covered: BTreeSet<&str> = report
        .central_terms
        .iter()
        .flat_map(|t| t.supporting_tickets.iter().map(String::as_str))
        .collect();
    for (module, expected) in &report.spread {
        let members: Vec<&TicketRecord> = corpus.tickets().iter().filter(|t| &t.module_tag == module).collect();
        let hit = members.iter().filter(|t| covered.contains(t.id.as_str())).count();
        assert_eq!(*expected, hit as f64 / members.len() as f64);
    }
    assert_eq!(report.spread.len(), 2);
    let direct = compute_spread(&report.central_terms, &corpus, "module_tag").unwrap();
    assert_eq!(direct, report.spread);
}
