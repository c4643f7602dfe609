//! Deterministic discrete-event simulator of a MapReduce cluster with FIFO, Fair and
//! Capacity schedulers and the ATLAS failure-aware scheduling layer.

pub mod atlas;
pub mod cluster;
pub mod config;
pub mod engine;
pub mod error;
pub mod failure;
pub mod ids;
pub mod pipeline;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod scheduler;
pub mod time;
pub mod workload;

pub use error::{Error, Result};
pub use time::SimTime;
