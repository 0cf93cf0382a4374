//! Implicit equal-weights particle filter twin experiments on a doubly
//! periodic rotating shallow-water model.

// Negated comparisons reject NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod rng;
pub mod swe;
pub mod model_error;
pub mod observation;
pub mod config;
pub mod truth;
pub mod filter;
pub mod ensemble;
pub mod diagnostics;
pub mod experiments;
pub mod bench;
