//! Streaming estimators whose relative error tends to zero as the stream
//! grows, with memory that stays polylogarithmic in the stream length.
//!
//! - [`f2`]: second frequency moment from a schedule of sign sketches.
//! - [`clustering`]: k-means / k-median from a union of block coresets.
//! - [`linalg`]: block-diagonal sketches for regression and matrix products.
//! - [`oracles`]: exact references used by tests and trajectory reports.
//! - [`stream`]: generators, input parsing and the experiment harness.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod f2;
pub mod hash;
pub mod linalg;
pub mod oracles;
pub mod sketch;
pub mod stream;

pub use error::{Error, Result};
