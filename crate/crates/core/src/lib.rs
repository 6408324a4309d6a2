//! RIS-aided multi-user MISO downlink with electromagnetic interference at the
//! surface and channel aging.
//!
//! The crate evaluates closed-form per-symbol SINR terms for MRT precoding with
//! MMSE channel estimates, checks them against a Monte-Carlo engine, and runs
//! parameter sweeps that write CSV tables.

pub mod analytics;
pub mod baseline;
pub mod channel;
pub mod config;
pub mod correlation;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod montecarlo;
pub mod random;
pub mod scenario;

pub use error::{Error, Result};
