//! Discrete-time grid city: geometry, demand, matching and movement.

pub mod demand;
pub mod fleet;
pub mod gap;
pub mod grid;
pub mod sim;

pub use demand::{Cents, DemandConfig, DemandPredictor, FareRule, RequestStatus, RideRequest};
pub use fleet::{DriverProfile, FleetConfig};
pub use gap::{compute_gap, GapVector};
pub use grid::{GridId, GridMap, SlotMask, SLOTS, STAY};
pub use sim::{DriverState, DriverStatus, Event, LastAction, MoveKind, Simulator};
