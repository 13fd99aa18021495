//! Direct transcriptions of the model formulas and shared fixtures for the
//! integration tests. Written independently of the library code paths.
#![allow(dead_code)]

use pecsim::config::{ComfortSpec, PlantParams, RoomParams};
use pecsim::datagen::{gen_occupancy, gen_weather, OccupancyProfile, WeatherProfile};
use pecsim::engine::{assemble_days, DayData};
use pecsim::{OccupancyString, Season, SimConfig};

/// Single-region room temperature after one step.
pub fn single_region(t: f64, u: f64, v: f64, t_ex: f64, occ: f64, rho_sigma_per_room: f64, p: &RoomParams, tau: f64) -> f64 {
    let supply = rho_sigma_per_room * v * (u - t);
    let envelope = p.alpha_ex * (t_ex - t);
    let loads = (p.q_oc + p.q_ap) * occ;
    t + (tau / p.capacity) * (supply + envelope + loads)
}

/// Two-region step: (HVAC temperature, occupied offset, unoccupied temperature).
#[allow(clippy::too_many_arguments)]
pub fn two_region(
    t_hv: f64,
    delta: f64,
    u: f64,
    v: f64,
    heater: f64,
    t_ex: f64,
    occ: f64,
    rho_sigma_per_room: f64,
    p: &RoomParams,
    tau: f64,
) -> (f64, f64, f64) {
    let next_hv = t_hv + (tau / p.capacity) * (rho_sigma_per_room * v * (u - t_hv) + p.alpha_ex * (t_ex - t_hv) + p.q_ap * occ);
    let next_delta = delta + (tau / p.capacity_occupied) * (p.q_oc * occ + p.q_heater * heater - p.alpha_in * delta);
    let next_un = next_hv + tau * p.alpha_in / (p.capacity - p.capacity_occupied) * delta;
    (next_hv, next_delta, next_un)
}

/// Plant power, split by whether the coil heats or cools.
pub fn plant_power(u: f64, flows: &[f64], t_mx: f64, plant: &PlantParams, heater_kw: f64) -> f64 {
    let total: f64 = flows.iter().sum();
    let coil = if u >= t_mx {
        total * plant.eta_h * (u - t_mx)
    } else {
        total * plant.eta_c * (t_mx - u)
    };
    coil + plant.eta_f * total * total + heater_kw
}

pub fn pmv(t_oc: f64, va: f64, c: &ComfortSpec) -> f64 {
    c.p1 * t_oc - c.p2 * va + c.p3 * va.powi(2) - c.p4
}

pub fn discomfort(p: f64, lo: f64, hi: f64) -> f64 {
    if p < lo {
        lo - p
    } else if p > hi {
        p - hi
    } else {
        0.0
    }
}

pub fn energy_kwh(power: &[f64], tau: f64) -> f64 {
    let mut e = 0.0;
    for p in power {
        e += p * tau / 3600.0;
    }
    e
}

/// Mismatch count and normalized distance over '0'/'1' text.
pub fn hamming(a: &str, b: &str) -> (usize, f64) {
    let n = a
        .chars()
        .zip(b.chars())
        .filter(|(x, y)| x != y)
        .count();
    (n, n as f64 / a.len() as f64)
}

/// Synthetic data set: `days` simulated days plus `history` occupancy-only days.
pub struct Dataset {
    pub strings: Vec<OccupancyString>,
    pub days: Vec<DayData>,
}

pub fn dataset(season: Season, days: usize, history: usize, seed: u64, cfg: &SimConfig) -> Dataset {
    let rooms = cfg.building.n_rooms();
    let strings = gen_occupancy(&OccupancyProfile::with_seed(seed), days + history, rooms, cfg.timebase.tau_fine).unwrap();
    let weather = gen_weather(&WeatherProfile::for_season(season, seed + 1000), days, cfg.timebase.tau_coarse).unwrap();
    let days = assemble_days(&strings, &weather, cfg).unwrap();
    Dataset { strings, days }
}
