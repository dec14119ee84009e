//! The dual actor-critic recommender: a Grid Agent that orders idle drivers
//! and a Vehicle Agent that picks each driver's destination in turn.

pub mod bandit;
pub mod buffer;
pub mod dual;
pub mod grid_agent;
pub mod net;
pub mod reward;
pub mod theorem;
pub mod vehicle_agent;

pub use buffer::ReplayBuffer;
pub use dual::{DualAgent, DualAgentConfig, OrderMode};
pub use grid_agent::{GridAgent, GridState, GridTransition};
pub use reward::{balance_reward, grid_reward, preference_reward, total_reward, RewardWeights};
pub use vehicle_agent::{VehicleAgent, VehicleState, VehicleTransition};
