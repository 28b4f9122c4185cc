//! Experiment harness for the radarnav simulator: seeded mission batches,
//! summary tables recomputed from logs on disk, and figures.

pub mod experiment;
pub mod records;
pub mod render;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
