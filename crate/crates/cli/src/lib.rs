//! Orchestration for the inspection gate: configuration, the passage
//! pipeline, batch evaluation and the HTTP services.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod pipeline;
pub mod service;

pub use config::GateConfig;
pub use error::{CliError, Stage};
pub use evaluate::{evaluate, EvalReport};
pub use pipeline::{run_pipeline, session_id_for};
