//! Simulator for federated self-supervised learning on vehicles with
//! learned offloading of training work to a roadside unit.

pub mod channel;
pub mod compute;
pub mod config;
pub mod drl;
pub mod error;
pub mod experiments;
pub mod fedssl;
pub mod metrics;
pub mod mobility;
pub mod nn;
pub mod rng;
pub mod selftest;
pub mod sim;
pub mod task_alloc;

pub use config::SimConfig;
pub use error::{Error, Result};
