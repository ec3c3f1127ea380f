//! Clickstream-driven recommendation engine.
//!
//! The pipeline ingests (customer, product, category, behavior, timestamp)
//! events, clusters customers by their dominant category, forms
//! behavior-length neighborhoods inside each cluster, and ranks products by
//! similarity-weighted behavior counts. An evaluation harness scores the
//! whole thing with fold-based precision/recall and cluster-validity indexes,
//! with k-means and fuzzy c-means baselines for comparison.

pub mod clustering;
pub mod correlation;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod recommender;

pub use error::{Error, ErrorClass, Result};
