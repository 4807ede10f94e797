// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation patching for transformer bi-encoder rankers.

// `!(a > b)` is how NaN-rejecting checks are written throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod axioms;
pub mod bundle;
pub mod model;
pub mod patching;
pub mod tensor;
pub mod tokenizer;
pub mod toyforge;
