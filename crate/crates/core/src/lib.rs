//! Exact analyzer for information leakage to a guessing adversary in index
//! coding.
//!
//! The library models an index-coding instance (messages, side information,
//! an exact rational joint distribution, an adversary that knows part of the
//! messages and guesses the rest), builds the confusion graphs of induced
//! subproblems, computes exact graph invariants and broadcast-rate brackets,
//! evaluates and optimizes the leakage of concrete index codes, and checks
//! the identities and inequalities connecting all of these quantities.

pub mod bitset;
pub mod codes;
pub mod error;
pub mod exact;
pub mod graph;
pub mod invariants;
pub mod leakage;
pub mod lp;
pub mod model;

pub use error::{Error, Result};
