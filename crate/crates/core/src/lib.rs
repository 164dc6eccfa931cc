//! Ticket intelligence for application-maintenance logs.
//!
//! The crate covers the full analysis loop over an exported incident log:
//!
//! * [`model`]: ticket records, field configuration and the term vocabulary
//! * [`text`]: tokenization with cryptic code-term handling, phrase chunking
//!   and sparse tf / tf-idf vectors
//! * [`index`]: inverted-index cosine search with filters and similarity bands
//! * [`classify`]: one-vs-rest linear SVMs for assignee and business-process
//!   recommendation, with accept/reject feedback
//! * [`themes`]: central problem-area mining (TF, TF-IDF, LSA, LDA, fusions)
//! * [`eval`]: cross-validation, precision@k, accuracy and correlation studies
//! * [`ingest`] and [`store`]: CSV ingestion and versioned artifact storage

pub mod classify;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod model;
pub mod store;
pub mod synth;
pub mod text;
pub mod themes;

pub use classify::{
    predict_with_kernel, train, ClassifierModel, FeatureSpace, FeedbackEvent, KernelConfig,
    Recommendation, TargetField, TrainConfig, Verdict,
};
pub use eval::{accuracy_against_log, cross_validate, pearson, precision_at_k, CvReport};
pub use index::{
    categorize_similarity, explain_hit, search, Band, InvertedIndex, Query, SearchHit, Thresholds,
};
pub use ingest::{ingest, ingest_file, IngestConfig, IngestReport};
pub use model::{validate_schema, validate_ticket, Corpus, FieldSchema, Schema, TicketRecord};
pub use store::{ArtifactKind, Store, StoreVersion};
pub use text::{SparseVector, TextPipeline, Token, TokenKind};
pub use themes::{mine_themes, ThemeConfig, ThemeMethod, ThemeReport};
