//! Autonomous transfer hub network planning: hub placement, autonomous truck
//! routing and hub loading/unloading capacity minimization.

pub mod capacity;
pub mod error;
pub mod graph;
pub mod instance;
pub mod jobs;
pub mod network;
pub mod report;
pub mod routing;

pub use error::{Error, Result};
