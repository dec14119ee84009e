//! Grid-city ride-hailing simulator with personalized vehicle repositioning.
//!
//! Idle vehicles in each grid are ordered by a grid-level actor-critic agent
//! and then given destination recommendations one at a time by a vehicle-level
//! agent. Simulated drivers accept or reject recommendations according to a
//! logistic model of rank, expected income and obedience.

pub mod agents;
pub mod baselines;
pub mod behavior;
pub mod commands;
pub mod config;
pub mod episode;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod world;

pub use error::{Error, Result};
