//! Coordination of the portal's cameras: a manager that registers sensors,
//! tracks their liveness and lifecycle, and broadcasts the common acquisition
//! primitives; simulated sensors producing wire-format data at camera rates;
//! and data-rate accounting against the disk budget.

pub mod client;
pub mod clock;
pub mod descriptor;
pub mod lifecycle;
pub mod manager;
pub mod sensor;
pub mod server;
pub mod sim;
pub mod throughput;

pub use clock::{Clock, VirtualClock, WallClock};
pub use descriptor::{portal_fleet, SensorDescriptor, SensorKind};
pub use lifecycle::{illegal_transitions, is_legal, Cause, Lifecycle, Transition};
pub use manager::{AcquisitionManager, BroadcastOutcome, Command, FleetView, ManagerConfig, ManagerError};
pub use sim::Portal;
pub use throughput::{throughput_report, ThroughputReport};
