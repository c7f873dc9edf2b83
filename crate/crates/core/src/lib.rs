//! Fractional delay-Doppler channel estimation for OTFS receivers.
//!
//! The crate covers the whole estimation chain for a single embedded pilot:
//!
//! - [`kernel`]: exact evaluation of the per-path delay-Doppler kernel and the
//!   CDDPM columns it induces, plus [`sfft`] transforms to the TF domain.
//! - [`channel`]: multipath channel draws and noisy pilot observations.
//! - [`pipic`]: progressive interpath interference cancellation (search and
//!   refinement phases) over any [`pipic::ColumnSource`].
//! - [`neural`]: the two-network TF surrogate for CDDPM columns, trained from
//!   scratch with Adam, and its model file format.
//! - [`dl_pipic`]: the estimator driven by surrogate columns during every
//!   cost maximization.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod dl_pipic;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod neural;
pub mod pipic;
pub mod sfft;

pub use config::OtfsConfig;
pub use error::{Error, Result};
pub use grid::{DdGrid, TfGrid, C64};
