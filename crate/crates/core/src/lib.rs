//! Core processing for the train inspection gate.
//!
//! The crate groups the pixel primitives ([`imgcore`]), the three analysis
//! pipelines ([`wagonid`], [`thermal`], [`pantograph`]), persistence of
//! processed passages ([`session`]) and the synthetic scenario renderer used
//! to exercise them ([`synth`]).

pub mod error;
pub mod imgcore;
pub mod pantograph;
pub mod session;
pub mod synth;
pub mod thermal;
pub mod wagonid;

pub use error::{Error, Result};
pub use imgcore::{BBox, BinaryImage, GrayImage, LabeledComponents};
