//! Weighted #DNF model counting.
//!
//! - [`formula`]: DNF formulas, weights and the `wdnf` text format.
//! - [`exact`]: exact counts by enumeration and by inclusion-exclusion.
//! - [`klm`]: the Karp–Luby–Madras estimator and Gaussian training labels.
//! - [`generator`]: randomized formula and weight generation.
//! - [`nn`]: the message-passing graph network estimator and its training.
//! - [`harness`]: datasets, evaluation, benchmarks and figure data.
//!
//! Batch work (labeling, evaluation, per-record gradients) runs on rayon when
//! the `parallel` feature is enabled; see [`par`].

pub mod exact;
pub mod formula;
pub mod generator;
pub mod harness;
pub mod klm;
pub mod nn;
pub mod par;
pub mod rng;
pub mod stats;

pub use formula::{
    parse_formula, serialize_formula, Assignment, Clause, DnfFormula, Literal, VariableId,
    WeightAssignment,
};
