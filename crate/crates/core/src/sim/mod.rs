//! Iteration-indexed simulation of the price feedback loop with loss
//! injection and least-squares recovery.

pub mod engine;
pub mod loss;
pub mod summary;

pub use engine::{
    run_scenario, IterationRecord, LinkRecord, NetworkSource, ScenarioConfig, SimError, Simulation,
    Trace, UserRecord,
};
pub use loss::{inject_loss, LossKind, LossPolicy, LossTarget, MessageClass};
pub use summary::Summary;
