//! Repeat-bias-aware re-ranking for next-basket recommendation.
//!
//! The crate takes per-user candidate relevance scores (from any basket
//! recommender), builds a per-user selection problem that trades relevance
//! against category diversity or popular/unpopular exposure parity and the
//! share of repeat items, solves it exactly, and evaluates the resulting
//! baskets.
//!
//! Pipeline, module by module:
//!
//! * [`dataset`]: load, filter, split basket sequences; repeat sets and
//!   popularity groups.
//! * [`scorer`]: import external score files or run the built-in scorers.
//! * [`objective`]: configuration, exposure models and per-user problems.
//! * [`solver`]: exact branch-and-bound, brute-force oracle, linear shortcut.
//! * [`metrics`]: Recall, DS, logDP, repeat ratio/bias, mFR and mDR.
//! * [`tuner`]: grid search with the recall-tolerance selection rule.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod pipeline;
pub mod scorer;
pub mod solver;
pub mod synthetic;
pub mod tuner;

pub use error::{Error, Result};

/// Reserved category for items absent from the category map.
pub const UNKNOWN_CATEGORY: &str = "UNK";
