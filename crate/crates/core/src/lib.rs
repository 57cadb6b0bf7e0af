//! Flood-attack detection from packet-level flow records.
//!
//! The pipeline: ingest flow records into fixed-length sampling windows,
//! reduce each window to many-to-one flows, score it with the fused NAFV
//! feature against a trained baseline of known source addresses, and confirm
//! sustained anomalies with an ARIMA trend forecaster behind a
//! threshold-activated detector state machine.

pub mod baseline;
pub mod detector;
pub mod error;
pub mod features;
pub mod flow;
pub mod ipd;
pub mod metrics;
pub mod prefilter;
pub mod scenario;
pub mod timeseries;

pub use error::{Error, Result};
