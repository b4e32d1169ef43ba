//! Routing, replenishment and energy planning for a hybrid truck serving
//! retailers on a road network with electrified segments.
//!
//! * [`instance`]: network, vehicle and demand data, file IO and generation.
//! * [`energy`]: vehicle physics and battery/fuel accounting per arc.
//! * [`demand`]: discrete demand, loss functions and their linear bounds.
//! * [`sdp`]: exact stochastic dynamic program over the discretized state.
//! * [`milp`]: static-plan MILP model, LP-file bridge and enumeration oracle.
//! * [`evaluate`]: exact and Monte Carlo costing of fixed plans.
//! * [`bench`]: factorial gap study and fuel-cost sensitivity runs.

pub mod bench;
pub mod demand;
pub mod energy;
pub mod evaluate;
pub mod instance;
pub mod milp;
pub mod sdp;

pub use demand::{DemandDistribution, LossKind, PiecewiseLinearLoss};
pub use energy::BatteryModel;
pub use instance::{load_instance, Instance, InstanceError};
pub use milp::Plan;
