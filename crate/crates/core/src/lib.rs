//! Detection of joint activities in location-history exports.
//!
//! The crate is organised as a pipeline: [`ingest`] reads exports, diaries
//! and registries; [`accuracy`] pairs each diary activity with the recorded
//! visit of every participant's devices; [`detection`] applies spatial and
//! temporal thresholds and aggregates detection rates; [`inference`] fits
//! logit models of detection and derives effect sizes; [`validation`]
//! cross-validates those models and reweights detections. [`scheduler`]
//! designs field experiments and [`simulator`] produces synthetic exports
//! with known error processes.

pub mod accuracy;
pub mod detection;
pub mod error;
pub mod geo;
pub mod inference;
pub mod ingest;
pub mod rng;
pub mod scheduler;
pub mod simulator;
pub mod validation;

pub use error::{Error, Result};
