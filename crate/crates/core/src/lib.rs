//! Simulation of building HVAC control with personal comfort devices under
//! occupancy prediction errors.

pub mod comfort;
pub mod config;
pub mod control;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod io;
pub mod occupancy;
pub mod state;
pub mod thermal;

pub use config::{Season, SimConfig};
pub use error::{Error, Result};
pub use occupancy::{ErrorMatrix, OccupancyString};
pub use state::{ControlVector, PecMode, RoomState};
