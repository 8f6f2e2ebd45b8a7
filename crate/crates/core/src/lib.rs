//! Joint uplink scheduling, trajectory and power design for a sensing UAV
//! that collects training data from ground devices.

// index loops mirror the per-slot, per-device formulas
#![allow(clippy::needless_range_loop)]

pub mod bound;
pub mod convexify;
pub mod driver;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod oracle;
pub mod output;
pub mod par;
pub mod scenario;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use geometry::Point2;
pub use scenario::{Scenario, ScenarioConfig};
