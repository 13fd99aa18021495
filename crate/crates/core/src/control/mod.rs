//! Control strategies: fixed schedule, occupancy-reactive, and the two predictive
//! controllers with and without personal comfort devices.

pub mod solver;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use solver::{
    solve_trajectory, MpcMode, Rollout, SolverSettings, TrajectoryProblem, TrajectorySolution,
    USearch, WarmStart,
};

use crate::config::{PlantParams, ScheduleParams, Season, SimConfig};
use crate::error::{Error, Result};
use crate::occupancy::OccupancyString;
use crate::state::{ControlVector, PecMode, RoomState};
use crate::thermal::RoomModel;

/// The four controllers compared by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Schedule,
    Reactive,
    Ns,
    Sa,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Schedule,
        ControllerKind::Reactive,
        ControllerKind::Ns,
        ControllerKind::Sa,
    ];

    pub fn is_predictive(self) -> bool {
        self.mpc_mode().is_some()
    }

    pub fn mpc_mode(self) -> Option<MpcMode> {
        match self {
            ControllerKind::Ns => Some(MpcMode::Ns),
            ControllerKind::Sa => Some(MpcMode::Sa),
            _ => None,
        }
    }

    /// Whether rooms are simulated with a separate occupied region and desk devices.
    pub fn has_devices(self) -> bool {
        self == ControllerKind::Sa
    }

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Schedule => "schedule",
            ControllerKind::Reactive => "reactive",
            ControllerKind::Ns => "ns",
            ControllerKind::Sa => "sa",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown controller `{s}` (expected one of schedule, reactive, ns, sa)"
                ))
            })
    }
}

/// Fixed-time plant operation: static supply temperature and flow during working
/// hours, everything off otherwise. `t` is seconds since midnight.
pub fn schedule_controller(
    t: u32,
    season: Season,
    params: &ScheduleParams,
    n_rooms: usize,
    reuse_ratio: f64,
) -> ControlVector {
    let hour = t / 3600;
    let on = (params.start_hour..params.end_hour).contains(&hour);
    let mut c = ControlVector::idle(n_rooms, params.supply_temperature(season), reuse_ratio);
    if on {
        c.v.fill(params.flow);
    }
    c
}

/// Occupancy-gated flow: each room gets the scheduled flow whenever it was occupied
/// at the last measurement, at any hour of the day.
pub fn reactive_controller(
    occupied: &[bool],
    season: Season,
    params: &ScheduleParams,
    reuse_ratio: f64,
) -> ControlVector {
    let mut c = ControlVector::idle(occupied.len(), params.supply_temperature(season), reuse_ratio);
    for (v, &o) in c.v.iter_mut().zip(occupied) {
        if o {
            *v = params.flow;
        }
    }
    c
}

/// Desk device state of one room and the comfort reading it acted on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpotState {
    pub mode: PecMode,
    pub pmv: f64,
}

impl SpotState {
    pub fn heater(&self) -> bool {
        self.mode.heater_on()
    }

    pub fn fan(&self) -> bool {
        self.mode.fan_on()
    }
}

/// Hysteretic reaction of a desk heater/fan to the local comfort reading.
pub fn spot_react(
    local_pmv: f64,
    occupied: bool,
    prior: SpotState,
    p_ll: f64,
    p_ul: f64,
    hysteresis: f64,
) -> SpotState {
    let mode = if !occupied {
        PecMode::Off
    } else if local_pmv < p_ll - hysteresis {
        PecMode::Heater
    } else if local_pmv > p_ul + hysteresis {
        PecMode::Fan
    } else if (p_ll + hysteresis..=p_ul - hysteresis).contains(&local_pmv) {
        PecMode::Off
    } else {
        prior.mode
    };
    SpotState {
        mode,
        pmv: local_pmv,
    }
}

/// What a predictive controller believes about the day: coarse occupancy per room
/// and the outside temperature, both at the planning step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBundle {
    pub occupancy: Vec<OccupancyString>,
    pub t_ex: Vec<f64>,
}

impl ForecastBundle {
    pub fn new(occupancy: Vec<OccupancyString>, t_ex: Vec<f64>, tau_coarse: u32) -> Result<Self> {
        let steps = t_ex.len();
        if let Some(s) = occupancy.iter().find(|s| s.granularity_s() != tau_coarse) {
            return Err(Error::Granularity {
                expected: tau_coarse,
                found: s.granularity_s(),
            });
        }
        if let Some(s) = occupancy.iter().find(|s| s.len() != steps) {
            return Err(Error::LengthMismatch {
                left: s.len(),
                right: steps,
            });
        }
        Ok(Self { occupancy, t_ex })
    }

    pub fn n_rooms(&self) -> usize {
        self.occupancy.len()
    }
}

/// A receding-horizon plan from `start_step` to the end of the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub mode: MpcMode,
    /// First coarse step of the day covered.
    pub start_step: usize,
    /// One past the last coarse step covered.
    pub end_step: usize,
    pub tau_coarse: u32,
    /// Hour block of `start_step`.
    pub first_block: usize,
    /// Supply temperature of each hour block from `first_block` on, °C.
    pub u_blocks: Vec<f64>,
    /// Per step, °C.
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    /// `[step][room]`, m³/s.
    pub v: Vec<Vec<f64>>,
    /// `[step][room]` planned heater duty cycle; all zero without devices.
    pub heater_duty: Vec<Vec<f64>>,
    /// `[node][room]` predicted states at step boundaries, `len = steps + 1`.
    pub predicted: Vec<Vec<RoomState>>,
    /// Comfort penalty of each step against the actual band.
    pub step_penalty: Vec<f64>,
    /// Planned energy, kWh.
    pub energy: f64,
    pub penalty: f64,
    /// Value the solver minimized (energy plus penalty against the planning band).
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl Plan {
    pub fn n_steps(&self) -> usize {
        self.end_step - self.start_step
    }

    /// Controls for absolute coarse step `k`.
    pub fn controls_at(&self, k: usize) -> ControlVector {
        let i = k - self.start_step;
        ControlVector {
            u: self.u[i],
            v: self.v[i].clone(),
            r: self.r[i],
            spot: vec![PecMode::Off; self.v[i].len()],
        }
    }

    /// Bounds and hourly blocking of every control.
    pub fn check(&self, plant: &PlantParams, coarse_per_u: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(format!("plan: {msg}")));
        for (i, &u) in self.u.iter().enumerate() {
            let k = self.start_step + i;
            if !(plant.u_min..=plant.u_max).contains(&u) {
                return fail(format!("u {u} out of bounds at step {k}"));
            }
            if u != self.u_blocks[k / coarse_per_u - self.first_block] {
                return fail(format!("u changes inside hour block at step {k}"));
            }
        }
        for (i, row) in self.v.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=plant.v_max).contains(v)) {
                return fail(format!("flow out of bounds at step {}", self.start_step + i));
            }
        }
        if self.heater_duty.iter().flatten().any(|h| !(0.0..=1.0).contains(h)) {
            return fail("heater duty outside [0, 1]".into());
        }
        if self.r.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return fail("reuse ratio outside [0, 1]".into());
        }
        Ok(())
    }

    fn warm_start(&self, start_step: usize, first_block: usize, n_blocks: usize) -> WarmStart {
        let n = self.v.first().map_or(0, Vec::len);
        let mut v = Vec::new();
        let mut heater = Vec::new();
        for k in start_step..self.end_step {
            let i = k - self.start_step;
            v.extend_from_slice(&self.v[i]);
            heater.extend_from_slice(&self.heater_duty[i]);
        }
        let last = *self.u_blocks.last().unwrap_or(&0.0);
        let u_blocks = (first_block..first_block + n_blocks)
            .map(|b| {
                b.checked_sub(self.first_block)
                    .and_then(|i| self.u_blocks.get(i).copied())
                    .unwrap_or(last)
            })
            .collect();
        debug_assert_eq!(v.len(), (self.end_step - start_step) * n);
        WarmStart {
            u_blocks,
            v,
            heater,
        }
    }
}

/// Everything a predictive controller needs for one planning call.
#[derive(Debug, Clone, Copy)]
pub struct MpcRequest<'a> {
    pub mode: MpcMode,
    pub season: Season,
    pub config: &'a SimConfig,
    pub forecast: &'a ForecastBundle,
    /// Measured room states at `start_step`.
    pub state: &'a [RoomState],
    pub start_step: usize,
    /// Supply temperature already committed for the current hour.
    pub frozen_u: Option<f64>,
    pub search: USearch,
    /// Previous plan to warm-start from; must cover `start_step`.
    pub warm: Option<&'a Plan>,
}

/// Plans flows (and heater duty) from `start_step` to the end of the day.
pub fn mpc_plan(req: &MpcRequest) -> Result<Plan> {
    let cfg = req.config;
    let tb = &cfg.timebase;
    let plant = cfg.building.plant;
    let days_steps = tb.coarse_per_day();
    let k0 = req.start_step;
    if k0 >= days_steps {
        return Err(Error::InvalidArgument(format!(
            "planning step {k0} outside the day ({days_steps} steps)"
        )));
    }
    let n = cfg.building.n_rooms();
    if req.state.len() != n || req.forecast.n_rooms() != n {
        return Err(Error::InvalidArgument(format!(
            "planner expects {n} rooms, got {} states and {} forecasts",
            req.state.len(),
            req.forecast.n_rooms()
        )));
    }
    if req.forecast.t_ex.len() != days_steps {
        return Err(Error::LengthMismatch {
            left: req.forecast.t_ex.len(),
            right: days_steps,
        });
    }
    let (u_lo, u_hi) = cfg.mpc.u_range(req.season, &plant);
    if u_lo > u_hi {
        return Err(Error::config(
            "mpc",
            format!("empty supply-temperature range [{u_lo}, {u_hi}]"),
        ));
    }

    let per_block = tb.coarse_per_u();
    let first_block = k0 / per_block;
    let block_of_step: Vec<usize> = (k0..days_steps).map(|k| k / per_block - first_block).collect();
    let n_blocks = block_of_step.last().unwrap() + 1;
    let mut frozen = vec![None; n_blocks];
    frozen[0] = req.frozen_u;

    let occupancy: Vec<Vec<f64>> = (k0..days_steps)
        .map(|k| {
            req.forecast
                .occupancy
                .iter()
                .map(|s| if s.get(k) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let problem = TrajectoryProblem {
        mode: req.mode,
        rooms: RoomModel::for_building(&cfg.building),
        plant,
        comfort: cfg.comfort.spec(req.season),
        margin: cfg.mpc.comfort_margin,
        penalty_weight: cfg.mpc.penalty_weight,
        reuse_ratio: plant.reuse_ratio,
        air_velocity: plant.diffuser_air_velocity,
        tau_fine: tb.tau_fine as f64,
        substeps: tb.fine_per_coarse(),
        initial: req.state.to_vec(),
        occupancy,
        t_ex: req.forecast.t_ex[k0..].to_vec(),
        block_of_step,
        frozen,
        u_lo,
        u_hi,
        u_step: cfg.mpc.u_grid_step,
    };
    let warm = req
        .warm
        .filter(|p| p.start_step <= k0 && p.end_step == days_steps && p.mode == req.mode)
        .map(|p| p.warm_start(k0, first_block, n_blocks));
    let sol = solve_trajectory(&problem, &SolverSettings::from(&cfg.mpc), req.search, warm.as_ref())?;

    let steps = days_steps - k0;
    let rows = |flat: &[f64]| -> Vec<Vec<f64>> {
        if flat.is_empty() {
            vec![vec![0.0; n]; steps]
        } else {
            flat.chunks(n).map(<[f64]>::to_vec).collect()
        }
    };
    let step_penalty = problem.step_penalties(&sol.states);
    let plan = Plan {
        mode: req.mode,
        start_step: k0,
        end_step: days_steps,
        tau_coarse: tb.tau_coarse,
        first_block,
        u: problem.block_of_step.iter().map(|&b| sol.u_blocks[b]).collect(),
        u_blocks: sol.u_blocks,
        r: vec![plant.reuse_ratio; steps],
        v: rows(&sol.v),
        heater_duty: rows(&sol.heater),
        predicted: sol.states.chunks(n).map(<[RoomState]>::to_vec).collect(),
        penalty: step_penalty.iter().sum(),
        step_penalty,
        energy: sol.energy,
        objective: sol.objective,
        converged: sol.converged,
        iterations: sol.iterations,
    };
    if let Err(e) = plan.check(&plant, per_block) {
        panic!("solver returned an invalid plan: {e}");
    }
    Ok(plan)
}

/// Receding-horizon wrapper: re-plans every coarse step, searching supply
/// temperatures only at hour boundaries.
#[derive(Debug, Clone)]
pub struct RecedingPlanner {
    pub mode: MpcMode,
    pub season: Season,
    last: Option<Plan>,
}

impl RecedingPlanner {
    pub fn new(mode: MpcMode, season: Season) -> Self {
        Self {
            mode,
            season,
            last: None,
        }
    }

    /// Plans from coarse step `k` given the measured states.
    pub fn plan(
        &mut self,
        k: usize,
        state: &[RoomState],
        forecast: &ForecastBundle,
        config: &SimConfig,
    ) -> Result<&Plan> {
        let boundary = k % config.timebase.coarse_per_u() == 0;
        let warm = self.last.as_ref().filter(|p| p.start_step <= k);
        let (frozen_u, search) = match (boundary, warm) {
            (true, None) => (None, USearch::Full),
            (true, Some(_)) => (None, USearch::Refine),
            (false, Some(p)) => (Some(p.u[k - p.start_step]), USearch::Fixed),
            (false, None) => (None, USearch::Full),
        };
        let plan = mpc_plan(&MpcRequest {
            mode: self.mode,
            season: self.season,
            config,
            forecast,
            state,
            start_step: k,
            frozen_u,
            search,
            warm,
        })?;
        Ok(self.last.insert(plan))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> ScheduleParams {
        ScheduleParams::default()
    }

    #[test]
    fn schedule_examples() {
        let c = schedule_controller(10 * 3600, Season::Summer, &sched(), 5, 0.8);
        assert_eq!((c.u, c.r), (15.0, 0.8));
        assert_eq!(c.v, vec![0.236; 5]);
        let c = schedule_controller(10 * 3600, Season::Winter, &sched(), 5, 0.8);
        assert_eq!(c.u, 20.0);
        for season in [Season::Summer, Season::Winter] {
            let c = schedule_controller(3 * 3600, season, &sched(), 5, 0.8);
            assert_eq!(c.total_flow(), 0.0);
        }
        assert_eq!(schedule_controller(18 * 3600, Season::Summer, &sched(), 1, 0.8).total_flow(), 0.0);
        assert_eq!(schedule_controller(9 * 3600, Season::Summer, &sched(), 1, 0.8).total_flow(), 0.236);
    }

    #[test]
    fn reactive_examples() {
        let c = reactive_controller(&[false; 5], Season::Summer, &sched(), 0.8);
        assert_eq!(c.total_flow(), 0.0);
        let c = reactive_controller(&[true, false, true, false, false], Season::Summer, &sched(), 0.8);
        assert_eq!(c.v, vec![0.236, 0.0, 0.236, 0.0, 0.0]);
    }

    #[test]
    fn spot_examples() {
        let on = SpotState {
            mode: PecMode::Heater,
            pmv: -1.0,
        };
        assert_eq!(spot_react(-2.0, false, on, -0.5, 0.5, 0.05).mode, PecMode::Off);
        assert_eq!(spot_react(-1.0, true, SpotState::default(), -0.5, 0.5, 0.05).mode, PecMode::Heater);
        let fan = SpotState {
            mode: PecMode::Fan,
            pmv: 0.6,
        };
        assert_eq!(spot_react(0.48, true, fan, -0.5, 0.5, 0.05).mode, PecMode::Fan);
        assert_eq!(spot_react(0.44, true, fan, -0.5, 0.5, 0.05).mode, PecMode::Off);
        assert_eq!(spot_react(0.6, true, on, -0.5, 0.5, 0.05).mode, PecMode::Fan);
        assert_eq!(spot_react(-0.52, true, on, -0.5, 0.5, 0.05).mode, PecMode::Heater);
        assert_eq!(spot_react(-0.52, true, SpotState::default(), -0.5, 0.5, 0.05).mode, PecMode::Off);
    }

    #[test]
    fn controller_names() {
        for k in ControllerKind::ALL {
            assert_eq!(k.name().parse::<ControllerKind>().unwrap(), k);
        }
        let err = "pid".parse::<ControllerKind>().unwrap_err().to_string();
        assert!(err.contains("schedule, reactive, ns, sa"));
    }
}
