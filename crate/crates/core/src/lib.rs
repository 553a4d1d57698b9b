//! Two-server, Byzantine-robust federated learning over secret-shared models.

pub mod attacks;
pub mod config;
pub mod distances;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod projection;
pub mod ring;
pub mod sim;
pub mod stpc;
pub mod tuning;

pub use error::{Error, Result};
