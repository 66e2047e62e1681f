//! Cross-patient machine-learning workbench for carotid-endarterectomy
//! monitoring signals.
//!
//! The pipeline runs in stages: load or synthesize patient records, window
//! and extract a 47-column feature table, train a random forest, then score
//! it under pooled, pairwise, leave-one-patient-out, and within-patient
//! protocols. A t-SNE embedding and SVG charts support inspection.

// Validation uses `!(x > y)` deliberately: the negation rejects NaN where
// `x <= y` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charts;
pub mod cli;
pub mod domain;
pub mod dsp;
pub mod eeg;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod reports;
pub mod hemo;
pub mod hrv;
pub mod rng;
pub mod synth;
pub mod tsne;

pub use error::{Error, Result};
