//! Scaling laws that map pre-training budget (FLOPs, parameters, tokens) to
//! downstream benchmark accuracy.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`data`]: experiment and benchmark records, accuracy normalization,
//!   fit-point filtering and holdout splitting.
//! - [`forms`]: the parametric laws themselves (direct power law on
//!   log-accuracy, broken power law, parameter/token law, irreducible-error
//!   variant, pass@k law, proxy links) and the exact pass@k formula with its
//!   analytic bounds.
//! - [`optim`]: Huber loss, QR least squares, a bounded limited-memory
//!   quasi-Newton minimizer, basin hopping and binary logistic regression.
//! - [`fit`]: end-to-end fitting recipes producing a serializable
//!   [`fit::ScalingModel`].
//! - [`eval`]: validation metrics, holdout validation, FLOPs-threshold sweeps
//!   and strategy comparison.
//! - [`synth`]: a synthetic experiment-grid generator used as a ground-truth
//!   oracle.
//!
//! File formats, the CLI and plotting live in the `scalelaw` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod eval;
pub mod fit;
pub mod forms;
pub(crate) mod math;
pub mod optim;
pub mod synth;

pub use error::{Error, Result};
