//! Routing benchmark workbench: builds quality/cost matrices from inference
//! logs, trains accuracy–cost-aware routers on soft targets, evaluates them
//! with accuracy, cost and Rank Score, and fits accuracy–cost frontiers.

pub mod baselines;
pub mod container;
pub mod error;
pub mod fusion;
pub mod log_store;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod pareto;
pub mod pipeline;
pub mod routers;
pub mod soft_label;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
