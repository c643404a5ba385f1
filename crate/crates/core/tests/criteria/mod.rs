//! Exact and property checks behind the first three acceptance criteria.
//! Each check panics on failure.

pub mod estimators;
pub mod invariants;
pub mod models;
