//! Synthesis of nested-loop programs that describe repeating structure in
//! grid-partitioned images, plus execution, extrapolation for completion, a
//! synthetic corpus generator, and structure-level evaluation.

pub mod error;
pub mod grid;
pub mod program;

pub use error::{Error, Result};
pub mod synthesis;
pub mod extrapolation;
pub mod datagen;
pub mod evaluation;
pub mod cli;
