//! Post-modifier dataset construction, claim selection, and contextual
//! post-modifier generation.
//!
//! The pipeline runs in stages: [`corpus_io`] reads parsed news documents,
//! [`extraction`] finds people with appositive post-modifiers, [`kb_link`]
//! links them to a claim store, and [`dataset`] assembles and splits the
//! result. [`claim_select`] and [`generation`] train and run the models, and
//! [`eval_metrics`] scores their output.

pub mod checkpoint;
pub mod claim_select;
pub mod corpus_io;
pub mod dataset;
pub mod error;
pub mod eval_metrics;
pub mod extraction;
pub mod generation;
pub mod kb_link;
pub mod synthetic;
pub mod text;
pub mod vocab;

pub use error::{Error, Result};
