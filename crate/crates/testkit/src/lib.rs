//! Shared test support: seeded fixture generators and slow nested-loop
//! reference implementations.
//!
//! Everything in [`oracle`] works directly on raw record slices with brute
//! force. None of it touches the engine's indexes, matrices, or recommenders,
//! so the two paths can be compared as independent witnesses.

pub mod gen;
pub mod oracle;
