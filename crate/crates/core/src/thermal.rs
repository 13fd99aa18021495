//! Discrete-time room thermal dynamics and plant power.
//!
//! Rooms exchange heat with the supply air, the outside, and internal loads; there
//! is no wall conduction between rooms. Both models are explicit forward-Euler
//! steps of length `tau`.

use serde::{Deserialize, Serialize};

use crate::config::{AirParams, BuildingSpec, PlantParams, RoomParams};
use crate::state::RoomState;

/// Outside conditions and occupancy seen by one room during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExogenousInputs {
    /// Outside temperature, °C.
    pub t_ex: f64,
    pub occupied: bool,
}

impl ExogenousInputs {
    pub fn new(t_ex: f64, occupied: bool) -> Self {
        Self { t_ex, occupied }
    }

    fn occupancy(&self) -> f64 {
        if self.occupied {
            1.0
        } else {
            0.0
        }
    }
}

/// Thermal parameters of one room together with its supply-air coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomModel {
    pub params: RoomParams,
    /// ρσ/n_r for the room's zone, kJ/(m³·K).
    pub supply_coeff: f64,
}

impl RoomModel {
    pub fn new(params: RoomParams, air: &AirParams, rooms_in_zone: usize) -> Self {
        Self {
            params,
            supply_coeff: air.rho * air.sigma / rooms_in_zone as f64,
        }
    }

    pub fn for_building(building: &BuildingSpec) -> Vec<RoomModel> {
        (0..building.n_rooms())
            .map(|j| RoomModel {
                params: building.rooms[j],
                supply_coeff: building.supply_coeff(j),
            })
            .collect()
    }

    /// Single-region step: supply air, envelope loss, occupant and appliance gains.
    pub fn step_single_region(&self, t: f64, u: f64, v: f64, ex: &ExogenousInputs, tau: f64) -> f64 {
        let p = &self.params;
        let q = (p.q_oc + p.q_ap) * ex.occupancy();
        let flux = self.supply_coeff * v * (u - t) + p.alpha_ex * (ex.t_ex - t) + q;
        t + tau / p.capacity * flux
    }

    /// Two-region step. The room bulk only sees the appliance load; the occupant and
    /// heater warm the occupied region, which leaks back at `alpha_in`.
    pub fn step_two_region(
        &self,
        state: &RoomState,
        u: f64,
        v: f64,
        heater_duty: f64,
        ex: &ExogenousInputs,
        tau: f64,
    ) -> RoomState {
        let p = &self.params;
        let o = ex.occupancy();
        let flux = self.supply_coeff * v * (u - state.t_hv)
            + p.alpha_ex * (ex.t_ex - state.t_hv)
            + p.q_ap * o;
        let t_hv = state.t_hv + tau / p.capacity * flux;
        let delta_flux = p.q_oc * o + p.q_heater * heater_duty - p.alpha_in * state.delta_oc;
        let delta_oc = state.delta_oc + tau / p.capacity_occupied * delta_flux;
        // The unoccupied region uses the offset from the start of the step.
        let t_un = t_hv + tau * p.alpha_in / (p.capacity - p.capacity_occupied) * state.delta_oc;
        RoomState {
            t_hv,
            delta_oc,
            t_un,
        }
    }

    /// Coefficients of one HVAC-temperature Euler step written as
    /// `t' = decay * t + drive`, with derivatives with respect to the flow `v`.
    pub(crate) fn hvac_substep(&self, u: f64, v: f64, t_ex: f64, heat_load: f64, tau: f64) -> Substep {
        let p = &self.params;
        let beta = tau / p.capacity;
        let g = self.supply_coeff;
        Substep {
            decay: 1.0 - beta * (g * v + p.alpha_ex),
            drive: beta * (g * v * u + p.alpha_ex * t_ex + heat_load),
            d_decay: -beta * g,
            d_drive: beta * g * u,
        }
    }

    /// Coefficients of one occupied-region offset step with derivatives with respect
    /// to the heater duty.
    pub(crate) fn offset_substep(&self, occupancy: f64, heater_duty: f64, tau: f64) -> Substep {
        let p = &self.params;
        let beta = tau / p.capacity_occupied;
        Substep {
            decay: 1.0 - beta * p.alpha_in,
            drive: beta * (p.q_oc * occupancy + p.q_heater * heater_duty),
            d_decay: 0.0,
            d_drive: beta * p.q_heater,
        }
    }
}

/// One affine Euler step `x' = decay * x + drive` and the derivatives of its
/// coefficients with respect to a single control input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Substep {
    pub decay: f64,
    pub drive: f64,
    pub d_decay: f64,
    pub d_drive: f64,
}

/// `n` repetitions of a [`Substep`] with constant inputs: `x_n = gain * x_0 + shift`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct ComposedStep {
    pub gain: f64,
    pub shift: f64,
    pub d_gain: f64,
    pub d_shift: f64,
}

impl Substep {
    pub fn compose(&self, n: usize) -> ComposedStep {
        let a = self.decay;
        // pow = a^i, d_pow = i a^(i-1), sum = Σ_{m<i} a^m, d_sum = Σ_{m<i} m a^(m-1)
        let (mut pow, mut d_pow, mut sum, mut d_sum) = (1.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            sum += pow;
            d_sum += d_pow;
            d_pow = d_pow * a + pow;
            pow *= a;
        }
        ComposedStep {
            gain: pow,
            shift: self.drive * sum,
            d_gain: d_pow * self.d_decay,
            d_shift: self.d_drive * sum + self.drive * d_sum * self.d_decay,
        }
    }
}

impl ComposedStep {
    pub fn apply(&self, x: f64) -> f64 {
        self.gain * x + self.shift
    }

    /// Derivative of the composed output with respect to the control input.
    pub fn d_control(&self, x: f64) -> f64 {
        self.d_gain * x + self.d_shift
    }
}

/// Mixing-box output: recirculated return air blended with outside air.
pub fn mixed_air_temperature(r: f64, t_ret: f64, t_ex: f64) -> f64 {
    r * t_ret + (1.0 - r) * t_ex
}

/// Flow-weighted mean of room temperatures, or the plain mean when no air flows.
pub fn return_air_temperature(flows: &[f64], temps: &[f64]) -> f64 {
    debug_assert_eq!(flows.len(), temps.len());
    let total: f64 = flows.iter().sum();
    if total > 0.0 {
        flows.iter().zip(temps).map(|(v, t)| v * t).sum::<f64>() / total
    } else if temps.is_empty() {
        0.0
    } else {
        temps.iter().sum::<f64>() / temps.len() as f64
    }
}

/// Instantaneous plant operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Mixed-air temperature, °C.
    pub t_mx: f64,
    /// Cooling-coil outlet temperature, °C.
    pub t_cu: f64,
    /// Total supply flow, m³/s.
    pub total_flow: f64,
    /// Electrical plus thermal input power, kW.
    pub power: f64,
}

/// Plant power for a supply temperature, per-room flows, and mixed-air temperature.
///
/// The cooling coil brings mixed air down to at most `u`, and the heating coil lifts
/// it the rest of the way, so at most one coil term is non-zero. `heater_load_kw` is
/// the summed output of personal heaters that are switched on (zero without devices).
pub fn plant_power(
    u: f64,
    flows: &[f64],
    t_mx: f64,
    plant: &PlantParams,
    heater_load_kw: f64,
) -> PlantState {
    let total_flow: f64 = flows.iter().sum();
    let t_cu = t_mx.min(u);
    let power = total_flow * plant.eta_h * (u - t_cu)
        + total_flow * total_flow * plant.eta_f
        + total_flow * plant.eta_c * (t_mx - t_cu)
        + heater_load_kw;
    PlantState {
        t_mx,
        t_cu,
        total_flow,
        power,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(n_r: usize) -> RoomModel {
        RoomModel::new(RoomParams::default(), &AirParams::default(), n_r)
    }

    #[test]
    fn equilibrium_when_nothing_drives_the_room() {
        let m = model(5);
        let t = m.step_single_region(20.0, 15.0, 0.0, &ExogenousInputs::new(20.0, false), 600.0);
        assert_eq!(t, 20.0);
    }

    #[test]
    fn envelope_loss_only() {
        let m = model(5);
        let t = m.step_single_region(20.0, 15.0, 0.0, &ExogenousInputs::new(10.0, false), 600.0);
        assert_abs_diff_eq!(t, 19.856, epsilon = 1e-12);
    }

    #[test]
    fn supply_air_and_occupancy() {
        let m = model(1);
        let t = m.step_single_region(20.0, 30.0, 0.236, &ExogenousInputs::new(10.0, true), 600.0);
        let rho_sigma = 1.204 * 1.003;
        let expected = 20.0 + 600.0 * (rho_sigma * 0.236 * 10.0 - 0.48 + 0.2) / 2000.0;
        assert_abs_diff_eq!(t, expected, epsilon = 1e-12);
    }

    #[test]
    fn two_region_decoupled_without_offset() {
        let m = model(5);
        let s = m.step_two_region(
            &RoomState::uniform(21.0),
            25.0,
            0.2,
            0.0,
            &ExogenousInputs::new(5.0, false),
            600.0,
        );
        assert_eq!(s.delta_oc, 0.0);
        assert_eq!(s.t_oc(), s.t_hv);
        assert_eq!(s.t_un, s.t_hv);
    }

    #[test]
    fn heater_and_occupant_raise_offset() {
        let m = model(5);
        let s = m.step_two_region(
            &RoomState::uniform(21.0),
            25.0,
            0.0,
            1.0,
            &ExogenousInputs::new(21.0, true),
            600.0,
        );
        assert_abs_diff_eq!(s.delta_oc, 2.4, epsilon = 1e-12);
    }

    #[test]
    fn offset_leaks_away() {
        let m = model(5);
        let start = RoomState {
            t_hv: 20.0,
            delta_oc: 2.0,
            t_un: 20.0,
        };
        let s = m.step_two_region(&start, 25.0, 0.0, 0.0, &ExogenousInputs::new(20.0, false), 600.0);
        assert_abs_diff_eq!(s.delta_oc, 2.0 - 600.0 * 0.1425 * 2.0 / 200.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.t_un, 20.0 + 600.0 * 0.1425 / 1800.0 * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mixing_box() {
        assert_eq!(mixed_air_temperature(1.0, 22.0, 2.0), 22.0);
        assert_eq!(mixed_air_temperature(0.0, 22.0, 2.0), 2.0);
        assert_abs_diff_eq!(mixed_air_temperature(0.8, 22.0, 2.0), 18.0, epsilon = 1e-12);
    }

    #[test]
    fn plant_power_cases() {
        let plant = PlantParams::default();
        assert_eq!(plant_power(20.0, &[0.0; 5], 18.0, &plant, 0.0).power, 0.0);
        let heating = plant_power(20.0, &[0.236], 18.0, &plant, 0.0);
        assert_eq!(heating.t_cu, 18.0);
        assert_abs_diff_eq!(
            heating.power,
            0.236 * 1.34 * 2.0 + 0.236 * 0.236 * 0.65,
            epsilon = 1e-12
        );
        let cooling = plant_power(15.0, &[0.1, 0.1], 25.0, &plant, 0.0);
        assert_eq!(cooling.t_cu, 15.0);
        assert_abs_diff_eq!(cooling.power, 0.2 * 0.4 * 10.0 + 0.04 * 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(plant_power(20.0, &[0.0], 18.0, &plant, 0.7).power, 0.7);
    }

    #[test]
    fn composed_step_matches_iteration() {
        let m = model(5);
        let sub = m.hvac_substep(14.0, 0.3, 28.0, 0.2, 30.0);
        let composed = sub.compose(20);
        let mut t = 26.0;
        for _ in 0..20 {
            t = m.step_single_region(t, 14.0, 0.3, &ExogenousInputs::new(28.0, true), 30.0);
        }
        assert_abs_diff_eq!(composed.apply(26.0), t, epsilon = 1e-12);

        let h = 1e-6;
        let plus = m.hvac_substep(14.0, 0.3 + h, 28.0, 0.2, 30.0).compose(20).apply(26.0);
        let minus = m.hvac_substep(14.0, 0.3 - h, 28.0, 0.2, 30.0).compose(20).apply(26.0);
        assert_abs_diff_eq!(composed.d_control(26.0), (plus - minus) / (2.0 * h), epsilon = 1e-7);
    }

    #[test]
    fn return_air_weighting() {
        assert_abs_diff_eq!(return_air_temperature(&[1.0, 3.0], &[20.0, 24.0]), 23.0);
        assert_abs_diff_eq!(return_air_temperature(&[0.0, 0.0], &[20.0, 24.0]), 22.0);
    }
}
