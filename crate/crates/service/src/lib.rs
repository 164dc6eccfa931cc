//! HTTP API and command-line front end over `tickscope-core`.

pub mod cli;
pub mod engine;
pub mod error;
pub mod http;
pub mod render;
pub mod settings;

pub use engine::{Engine, Envelope};
pub use error::ApiError;
pub use settings::Settings;
