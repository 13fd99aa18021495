//! Control and state vectors shared by the thermal model, controllers and engine.

use serde::{Deserialize, Serialize};

use crate::config::PlantParams;
use crate::error::{Error, Result};

/// Operating mode of a personal comfort device. Heater and fan are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PecMode {
    #[default]
    Off,
    Heater,
    Fan,
}

impl PecMode {
    pub fn heater_on(self) -> bool {
        self == PecMode::Heater
    }

    pub fn fan_on(self) -> bool {
        self == PecMode::Fan
    }
}

/// Per-timestep actuation of the air-handling unit, VAV boxes and desk devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    /// Supply air temperature, °C.
    pub u: f64,
    /// Per-room flow, m³/s.
    pub v: Vec<f64>,
    /// Reuse-air ratio.
    pub r: f64,
    /// Per-room personal device state.
    pub spot: Vec<PecMode>,
}

impl ControlVector {
    /// All flows zero and devices off.
    pub fn idle(n_rooms: usize, u: f64, r: f64) -> Self {
        Self {
            u,
            v: vec![0.0; n_rooms],
            r,
            spot: vec![PecMode::Off; n_rooms],
        }
    }

    pub fn total_flow(&self) -> f64 {
        self.v.iter().sum()
    }

    pub fn validate(&self, plant: &PlantParams) -> Result<()> {
        if !(plant.u_min..=plant.u_max).contains(&self.u) {
            return Err(Error::InvalidArgument(format!(
                "supply temperature {} outside [{}, {}]",
                self.u, plant.u_min, plant.u_max
            )));
        }
        if let Some((i, v)) = self
            .v
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=plant.v_max).contains(*v))
        {
            return Err(Error::InvalidArgument(format!(
                "room {i} flow {v} outside [0, {}]",
                plant.v_max
            )));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::InvalidArgument(format!(
                "reuse ratio {} outside [0, 1]",
                self.r
            )));
        }
        if self.spot.len() != self.v.len() {
            return Err(Error::InvalidArgument(
                "device states and flows cover different room counts".into(),
            ));
        }
        Ok(())
    }
}

/// Temperature state of one room.
///
/// In the single-region model `delta_oc` stays 0 and `t_un == t_hv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomState {
    /// Temperature due to HVAC, °C.
    pub t_hv: f64,
    /// Offset of the occupied region above `t_hv`, °C.
    pub delta_oc: f64,
    /// Temperature of the unoccupied region, °C.
    pub t_un: f64,
}

impl RoomState {
    pub fn uniform(t: f64) -> Self {
        Self {
            t_hv: t,
            delta_oc: 0.0,
            t_un: t,
        }
    }

    /// Temperature felt by the occupant.
    pub fn t_oc(&self) -> f64 {
        self.t_hv + self.delta_oc
    }
}
