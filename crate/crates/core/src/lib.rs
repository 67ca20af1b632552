//! Fairness-regularized paper selection.
//!
//! A small two-hidden-layer network is trained on per-paper features with a
//! differentiable statistical-parity penalty over protected author attributes
//! (race, country). The trained scores re-rank every submission and the top
//! `n_accept` papers are selected. The [`experiments`] module sweeps the
//! penalty strength and reports macro/micro/utility gains against a baseline.
//!
//! Module map:
//!
//! - [`numeric`]: dense matrices, the MLP forward/backward pass, Adam, BCE, seeded RNG.
//! - [`fairness`]: single-attribute and combined parity losses with analytic gradients.
//! - [`dataset`]: record schemas, CSV ingestion, encoding, stratified split, synthetic corpora.
//! - [`training`]: mini-batch training under `BCE + lambda * fairness` with early stopping.
//! - [`selection`]: rank-and-select with deterministic tie-breaking.
//! - [`metrics`]: gains, diversity gain, F-measure, distribution reports.
//! - [`experiments`]: multi-seed sweeps, aggregation and report emission.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod fairness;
pub mod fsio;
pub mod metrics;
pub mod numeric;
pub mod selection;
pub mod training;

pub use error::{Error, Result};
