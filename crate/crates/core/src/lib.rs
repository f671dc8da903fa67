//! Greedy placement for infinite-server systems with packing constraints.
//!
//! - [`config_space`]: feasible server configurations, edges, aggregate classes.
//! - [`optimizer`]: the fluid optimum `x*`, the aggregate optimum, and drift oracles.
//! - [`simulator`]: exact CTMC simulation of the open and closed systems.
//! - [`fluid`]: deterministic integration of the fluid dynamics.
//! - [`harness`]: scaling experiments, stationary estimates, reports.

pub mod config_space;
pub mod error;
pub mod fluid;
pub mod harness;
pub mod optimizer;
pub mod simulator;

pub use config_space::{ConfigSpace, ResourceProfile, SpaceSpec};
pub use error::{Error, Result};
pub use optimizer::{Demand, StatePoint};
