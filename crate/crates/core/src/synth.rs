//! Seeded synthetic ticket generators for demos, fixtures and benchmarks.

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{fields, FieldRole, Schema, TicketRecord};

/// Three problem areas with disjoint vocabularies.
pub const AREAS: [(&str, &str, &[&str]); 3] = [
    (
        "billing-team",
        "Invoice to Cash",
        &[
            "invoice", "billing", "payment", "refund", "ledger", "tax", "voucher", "remittance",
            "currency", "receivable", "dunning", "credit", "debit", "statement", "surcharge",
        ],
    ),
    (
        "identity-team",
        "User Access",
        &[
            "login", "password", "session", "token", "account", "lockout", "certificate", "role",
            "permission", "directory", "credential", "signon", "profile", "authentication", "mfa",
        ],
    ),
    (
        "devices-team",
        "Workplace Devices",
        &[
            "printer", "toner", "scanner", "paper", "tray", "spooler", "monitor", "keyboard",
            "docking", "laptop", "battery", "projector", "headset", "webcam", "driver",
        ],
    ),
];

/// Generic words shared by every area.
pub const COMMON: [&str; 10] = [
    "error", "issue", "request", "problem", "urgent", "screen", "message", "customer", "report",
    "system",
];

pub const MODULES: [&str; 3] = ["Finance", "Security", "Hardware"];
pub const PRIORITIES: [&str; 3] = ["P1", "P2", "P3"];
pub const STATUSES: [&str; 4] = ["Closed", "Open", "Assigned", "Re-Opened"];

pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_704_067_200, 0).expect("valid timestamp")
}

/// `per_area` tickets for each area, words drawn only from that area's
/// vocabulary. Assignee, business process and module follow the area.
pub fn disjoint_area_tickets(per_area: usize, words_per_ticket: usize, seed: u64) -> Vec<TicketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tickets = Vec::with_capacity(per_area * AREAS.len());
    for i in 0..per_area {
        for (a, (assignee, process, words)) in AREAS.iter().enumerate() {
            let summary: Vec<&str> = (0..words_per_ticket.div_ceil(2))
                .map(|_| *words.choose(&mut rng).unwrap())
                .collect();
            let description: Vec<&str> = (0..words_per_ticket / 2)
                .map(|_| *words.choose(&mut rng).unwrap())
                .collect();
            let mut t = TicketRecord::new(format!("A{a}-{i:04}"), summary.join(" "));
            t.description = description.join(" ");
            t.assignee = assignee.to_string();
            t.business_process = process.to_string();
            t.module_tag = MODULES[a].to_string();
            t.priority = PRIORITIES[rng.random_range(0..PRIORITIES.len())].to_string();
            t.status = STATUSES[rng.random_range(0..STATUSES.len())].to_string();
            t.created_date = Some(epoch() + Duration::hours(rng.random_range(0..24 * 365)));
            tickets.push(t);
        }
    }
    tickets
}

/// Tickets over a mixed vocabulary with area words, common words and an
/// occasional code term, labeled by the dominant area.
pub fn mixed_tickets(n: usize, seed: u64) -> Vec<TicketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let a = rng.random_range(0..AREAS.len());
            let (assignee, process, words) = AREAS[a];
            let len = rng.random_range(3..9);
            let mut tokens: Vec<String> = Vec::with_capacity(len + 2);
            for _ in 0..len {
                let w = if rng.random_bool(0.75) {
                    *words.choose(&mut rng).unwrap()
                } else if rng.random_bool(0.5) {
                    *COMMON.choose(&mut rng).unwrap()
                } else {
                    let other = AREAS[rng.random_range(0..AREAS.len())].2;
                    *other.choose(&mut rng).unwrap()
                };
                tokens.push(w.to_string());
            }
            if rng.random_bool(0.2) {
                tokens.push(format!("ERR{:04}X", rng.random_range(0..50)));
            }
            let split = (tokens.len() / 2).max(1);
            let mut t = TicketRecord::new(format!("M{i:05}"), tokens[..split].join(" "));
            t.description = tokens[split..].join(" ");
            t.assignee = assignee.to_string();
            t.business_process = process.to_string();
            t.module_tag = MODULES[a].to_string();
            t.priority = PRIORITIES[rng.random_range(0..PRIORITIES.len())].to_string();
            t.status = STATUSES[rng.random_range(0..STATUSES.len())].to_string();
            t.created_date = Some(epoch() + Duration::hours(rng.random_range(0..24 * 365)));
            t
        })
        .collect()
}

/// Serializes tickets as delimited text with the schema's column names as
/// header. Dates use the created-date format of the schema.
pub fn to_csv(tickets: &[TicketRecord], schema: &Schema) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(schema.fields().iter().map(|f| f.column_mapping.as_str()))
        .expect("in-memory write");
    for t in tickets {
        let row: Vec<String> = schema
            .fields()
            .iter()
            .map(|f| match f.name.as_str() {
                fields::CREATED_DATE => t
                    .created_date
                    .map(|d| {
                        d.format(f.datetime_format.as_deref().unwrap_or("%Y-%m-%d %H:%M:%S"))
                            .to_string()
                    })
                    .unwrap_or_default(),
                name => t.field_value(name).unwrap_or_default().to_string(),
            })
            .collect();
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

/// Filter field names of a schema in hierarchy order.
pub fn filter_names(schema: &Schema) -> Vec<String> {
    schema
        .fields()
        .iter()
        .filter(|f| f.role == FieldRole::Filter)
        .map(|f| f.name.clone())
        .collect()
}
