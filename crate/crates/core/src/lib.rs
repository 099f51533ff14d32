//! Coordinated path-tracking and stability control for a four-wheel
//! independently driven vehicle, with a matching simulation plant.
//!
//! The controller is layered: a linear time-varying MPC (optionally with
//! speed-scheduled horizon and weights) tracks the reference path through the
//! front steering angle, while an LQR-based direct yaw moment controller
//! stabilizes the sideslip/yaw states when the vehicle leaves its stability
//! envelope. The combined force and moment demand is distributed to the four
//! wheel motors by an adhesion-weighted allocator.

// `!(x > 0.0)` guards are deliberate: unlike `x <= 0.0` they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod dyc;
pub mod error;
pub mod harness;
pub mod mpc;
pub mod params;
pub mod plant;
pub mod qp;
pub mod scheduler;

pub use allocation::{allocate, Allocation, AllocationProblem, AllocationStatus, WheelTorques};
pub use dyc::{DycConfig, DycController, LqrGains, LqrWeights, StabilityEnvelope, TwoDofModel};
pub use error::{Error, Result};
pub use harness::{
    run_scenario, ComparisonRow, ControllerKind, Metrics, PathReference, ScenarioConfig, SimLog,
    SpeedProfile,
};
pub use mpc::{mpc_step, MpcConfig, MpcStep};
pub use params::{RoadCondition, VehicleParams};
pub use plant::{PlantInputs, PlantState};
pub use scheduler::{ScheduleTable, ScheduledParams};
