//! Online, unsupervised anomaly detection for authentication logs.
//!
//! Log lines are treated as token sequences and scored by recurrent
//! language models trained day by day: a model trained on days `< k`
//! scores every event of day `k` before it is updated on that day's
//! lines. Low-probability (high cross-entropy) events are anomalous.
//!
//! The crate provides:
//! - [`ingest`]: parsing, filtering, red-team labelling and a synthetic
//!   corpus generator for desk-scale experiments,
//! - [`tokenize`]: word- and character-level tokenization with a fixed
//!   vocabulary,
//! - [`nn`]: the dense LSTM core with exact backpropagation through time,
//! - [`models`]: the four language-model variants (EM, BEM, T-EM, T-BEM),
//! - [`pipeline`]: the online score-then-train day loop,
//! - [`baselines`]: aggregate user-day features with PCA and isolation
//!   forest detectors,
//! - [`metrics`]: AUC, per-day average percentile, ROC curves,
//! - [`config`] / [`cli`]: the command surface.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod tokenize;

pub use error::{Error, Result};
