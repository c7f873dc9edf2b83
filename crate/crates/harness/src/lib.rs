//! Experiment harness for the OTFS channel estimators: configuration files,
//! NMSE and path-count sweeps, latency benchmarks, CSV and SVG output.

pub mod config;
pub mod datafile;
pub mod error;
pub mod latency;
pub mod metrics;
pub mod plot;
pub mod sweep;

pub use config::{ExperimentConfig, LatencyConfig, Method};
pub use error::{HarnessError, Result};
