//! Federated learning benchmark over heterogeneously partitioned tabular
//! health data.

pub mod algorithms;
pub mod data;
pub mod error;
pub mod model;
pub mod orchestrator;
pub mod partition;
pub mod seed;
pub mod transport;

pub use error::{Error, Result};
