//! Deterministic synthetic passages with exact ground truth.

pub mod font;
pub mod side;
pub mod roof;
pub mod scenario;
