//! Tools for studying how a language model's plan shifts while it generates.
//!
//! - [`planmodel`]: conjugate-Gaussian simulator of prior/likelihood planning dynamics.
//! - [`lasso`]: coordinate-descent LASSO used to probe hidden states.
//! - [`probe`]: embedding dump format and offset/position R² curves.
//! - [`genharness`]: prompt protocols, completion client, mock endpoint, JSONL records.
//! - [`stats`]: t-tests with their distribution functions, plus record summaries.
//! - [`plot`]: deterministic SVG rendering of the CSV outputs.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod genharness;
pub mod lasso;
pub mod planmodel;
pub mod plot;
pub mod probe;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
