//! Brain age estimation from region-wise MRI features.
//!
//! The crate covers the full path from feature tables to evaluated models:
//! cohort ingestion and stratified splitting ([`dataset`]), min-max scaling and
//! feature-set fusion ([`features`]), four linear regressors implemented
//! natively ([`regressors`]), age clustering, t-SNE embedding and evaluation
//! metrics ([`analysis`]), cross-validated model selection ([`pipeline`]) and a
//! synthetic cohort generator with planted ground truth ([`synth`]).

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod regressors;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
