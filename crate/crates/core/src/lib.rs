//! Empirical models of residential EV charging behaviour.
//!
//! Charging logs are cleaned and classified ([`ingest`]), turned into
//! per-stratum PMFs ([`model`]), and sampled back into multi-event daily
//! charging schedules ([`generator`]). [`scenario`] layers generated fleets
//! onto metered base loads, [`sensitivity`] measures how the fitted
//! profiles depend on the number of vehicles observed, and [`synth`]
//! provides a known ground truth for checking the whole pipeline.

pub mod domain;
pub mod error;
pub mod generator;
pub mod ingest;
pub mod model;
pub mod scenario;
pub mod sensitivity;
pub mod synth;

pub use error::{Error, Result};
