//! Price-based congestion control simulator.
//!
//! Links price congestion with a projected subgradient step, users answer
//! with the rate that maximizes their logistic utility minus the path price,
//! and the network recovers intervals and demands lost to dropped control
//! messages with a constant-memory least-squares fit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod delay;
pub mod estimator;
pub mod num;
pub mod sim;
pub mod topology;
pub mod wire;

pub use sim::{run_scenario, ScenarioConfig, Summary, Trace};
pub use topology::Network;
