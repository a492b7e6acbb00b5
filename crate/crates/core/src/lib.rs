//! Longitudinal vehicle simulator with a hierarchical emergency braking
//! controller: a rule-based supervisor selects between a wheel-slip
//! controller (sliding mode or gain-scheduled LQR) and a PID cruise
//! regulator.

// validation is written as `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod care;
pub mod config;
pub mod error;
pub mod lqr;
pub mod output;
pub mod sim;
pub mod smc;
pub mod speed_regulator;
pub mod supervisor;
pub mod vehicle;
pub mod verify;

pub use error::{AebError, Result};
pub use sim::{run_scenario, Controller, RunMetrics, Scenario, SimConfig, SimRun, TraceRecord};
pub use supervisor::ControllerMode;
pub use vehicle::{ControlCommand, VehicleParams, VehicleState};
