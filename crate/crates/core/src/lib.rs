//! Technology-exposure indices from Q&A activity, new-work detection from
//! occupational title revisions, and fixed-effects IV estimation.
//!
//! Numerical code is generic over the scalar type (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod estimator;
pub mod exposure;
pub mod newwork;
pub mod num;
pub mod panel;
pub mod pipeline;
pub mod scoring;
pub mod semlink;
pub mod synth;

pub use error::{Error, Result};

pub type ExposureSeries = exposure::ExposureSeries<f64>;
pub type TransitionMatrix = semlink::TransitionMatrix<f64>;
pub type EmbeddingStore = semlink::EmbeddingStore<f64>;
pub type PanelFrame = panel::PanelFrame<f64>;
pub type RegressionResult = estimator::RegressionResult<f64>;
pub type TagScoreTable = scoring::TagScoreTable<f64>;
