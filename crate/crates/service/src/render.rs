//! Plain-text tables for `--output table`.

use std::fmt::Write;

use tickscope_core::classify::Recommendation;
use tickscope_core::eval::{CorrelationStudy, CvReport, PrecisionAtK};
use tickscope_core::model::Schema;
use tickscope_core::store::StoreVersion;
use tickscope_core::themes::{ThemePairEvidence, ThemeReport};

use crate::engine::{Envelope, FeedbackAck, IngestOutcome, SearchResult};

pub trait Table {
    fn table(&self) -> String;
}

impl<T: Table> Table for Envelope<T> {
    fn table(&self) -> String {
        let mut out = String::new();
        let corpus = self.corpus_version.map_or("-".to_string(), |v| v.to_string());
        let models: Vec<String> = self.model_version.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "corpus v{corpus}  models [{}]", models.join(", "));
        out.push_str(&self.result.table());
        out
    }
}

impl Table for SearchResult {
    fn table(&self) -> String {
        let mut out = format!("{:>4}  {:<16} {:>8}  {:<17} matched\n", "rank", "ticket", "score", "band");
        for (i, h) in self.hits.iter().enumerate() {
            let band = serde_json::to_value(h.band).ok();
            let band = band.as_ref().and_then(|b| b.as_str()).unwrap_or("?");
            let _ = writeln!(
                out,
                "{:>4}  {:<16} {:>8.4}  {:<17} {}",
                i + 1,
                h.ticket_id,
                h.score,
                band,
                h.matched_terms.join(" ")
            );
        }
        out
    }
}

impl Table for Recommendation {
    fn table(&self) -> String {
        let mut out = format!("{:>4}  {:<32} {:>10}\n", "rank", "label", "score");
        for (i, r) in self.ranked.iter().enumerate() {
            let flag = if r.demoted { "  (outside recency range)" } else { "" };
            let _ = writeln!(out, "{:>4}  {:<32} {:>10.4}{flag}", i + 1, r.label, r.score);
        }
        out
    }
}

impl Table for FeedbackAck {
    fn table(&self) -> String {
        format!(
            "recorded {} for {}; model version {}; log length {}\n",
            self.event_id,
            self.target_field.as_str(),
            self.model_version,
            self.log_length
        )
    }
}

impl Table for IngestOutcome {
    fn table(&self) -> String {
        let r = &self.report;
        let mut out = String::new();
        let _ = writeln!(out, "source           {}", r.source_label);
        let _ = writeln!(out, "data rows        {}", r.data_rows);
        let _ = writeln!(out, "accepted         {}", r.accepted);
        let _ = writeln!(out, "quarantined      {}", r.quarantined.len());
        let _ = writeln!(out, "corpus           v{} {}", self.corpus.version, r.corpus_hash);
        for q in &r.quarantined {
            let _ = writeln!(out, "  row {:>6}  {}", q.row, q.reason);
        }
        for (target, m) in &self.models {
            match (&m.stored, &m.error) {
                (Some(v), _) => {
                    let _ = writeln!(out, "{target:<16} model v{} ({} feedback events replayed)", v.version, m.replayed);
                }
                (None, Some(e)) => {
                    let _ = writeln!(out, "{target:<16} not trained: {e}");
                }
                (None, None) => {}
            }
        }
        out
    }
}

impl Table for ThemeReport {
    fn table(&self) -> String {
        self.to_table()
    }
}

impl Table for ThemePairEvidence {
    fn table(&self) -> String {
        let mut out = format!("{:?} and {:?}: {} tickets\n", self.p, self.q, self.count);
        for t in &self.tickets {
            let _ = writeln!(out, "  {t}");
        }
        out
    }
}

impl Table for CvReport {
    fn table(&self) -> String {
        self.to_table()
    }
}

impl Table for PrecisionAtK {
    fn table(&self) -> String {
        let mut out = format!("{:<32} {:>8} {:>18}\n", "query", "relevant", "relevant+related");
        for q in &self.queries {
            let _ = writeln!(out, "{:<32} {:>8} {:>18}", q.query, q.relevant, q.relevant_or_related);
        }
        let _ = writeln!(out, "precision@{} relevant          {:.4}", self.k, self.precision_relevant);
        let _ = writeln!(out, "precision@{} relevant+related  {:.4}", self.k, self.precision_relevant_or_related);
        out
    }
}

impl Table for CorrelationStudy {
    fn table(&self) -> String {
        let mut out = format!("{:<32} {:>8} {:>8} {:>9}\n", "label", "train", "holdout", "accuracy");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{:<32} {:>8} {:>8} {:>9.4}",
                p.label, p.training_count, p.holdout_count, p.accuracy
            );
        }
        match (self.r, &self.note) {
            (Some(r), _) => {
                let _ = writeln!(out, "pearson r        {r:.4}");
            }
            (None, Some(note)) => {
                let _ = writeln!(out, "pearson r        undefined: {note}");
            }
            (None, None) => {}
        }
        out
    }
}

impl Table for Vec<StoreVersion> {
    fn table(&self) -> String {
        let mut out = format!("{:<13} {:>7}  {:<25} {:<16} tag\n", "kind", "version", "created", "hash");
        for v in self {
            let _ = writeln!(
                out,
                "{:<13} {:>7}  {:<25} {:<16} {}",
                v.kind.dir_name(),
                v.version,
                v.created_at.format("%Y-%m-%d %H:%M:%S"),
                &v.hash[..16.min(v.hash.len())],
                v.tag.as_deref().unwrap_or("")
            );
        }
        out
    }
}

impl Table for Schema {
    fn table(&self) -> String {
        let mut out = format!("{:<20} {:<12} {:>5}  column\n", "field", "role", "level");
        for f in self.fields() {
            let role = serde_json::to_value(f.role).ok();
            let role = role.as_ref().and_then(|r| r.as_str()).unwrap_or("?");
            let _ = writeln!(out, "{:<20} {:<12} {:>5}  {}", f.name, role, f.filter_level, f.column_mapping);
        }
        out
    }
}
