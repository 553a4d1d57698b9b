pub mod data;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod simulation;
pub mod train;

pub use simulation::{AttackTrace, GlobalModel, RoundReport, Simulation};
