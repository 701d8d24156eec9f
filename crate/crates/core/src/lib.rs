//! Model-based annotation budget simulation for subjective multi-task text
//! labelling.
//!
//! The crate decides, per `(text, task)` cell, whether human annotation is
//! worth paying for, and measures the effort saved against the knowledge
//! lost when a model auto-labels a cell as irrelevant.

pub mod corpus;
pub mod metrics;
pub mod predictor;
pub mod scenarios;
pub mod seed;
pub mod stats;
pub mod vtl;
