//! Rare-entity knowledge-graph mining, multi-hop QA synthesis, a ReAct-style
//! tool-use runtime and reward computations for training search agents.
//!
//! Numeric code is generic over [`num::Scalar`]; the aliases below fix the
//! common instantiations.

pub mod agent;
pub mod clients;
pub mod kg;
pub mod medtools;
pub mod mining;
pub mod num;
pub mod reward;
pub mod synthesis;
pub mod testing;

pub use num::{Real, Scalar};

/// Exact arbitrary-precision rational, used where sums must cancel exactly.
pub type ExactRational = num_rational::BigRational;
