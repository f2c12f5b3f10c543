//! GUI grounding pipeline on top of `zoomground-core`: model transport,
//! image cropping, the two-stage conditional-zoom orchestration, dataset
//! ingestion and augmentation, and the benchmark evaluation harness.

pub mod client;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod imageops;
pub mod pipeline;

pub use zoomground_core as core;
