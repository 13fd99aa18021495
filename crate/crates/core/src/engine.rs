//! Closed-loop day simulation and error-level sweeps.
//!
//! Controllers act every coarse step, rooms advance every fine step with the coarse
//! controls held. Comfort and power always use the true occupancy; forecasts only
//! reach the planner.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comfort::{discomfort_instant, discomfort_percent, daily_energy, pmv, robustness, ComfortSeries, RobustnessBox};
use crate::config::{Season, SimConfig};
use crate::control::{
    reactive_controller, schedule_controller, spot_react, ControllerKind, ForecastBundle, RecedingPlanner, SpotState,
};
use crate::error::{Error, Result};
use crate::occupancy::{upsample_to_coarse, ErrorMatrix, OccupancyString};
use crate::state::{ControlVector, RoomState};
use crate::thermal::{mixed_air_temperature, plant_power, return_air_temperature, ExogenousInputs, RoomModel};

/// One closed-loop day for one controller.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub day_id: String,
    pub controller: ControllerKind,
    pub season: Season,
    /// Measured occupancy per room at the fine step.
    pub truth: Vec<OccupancyString>,
    /// Forecast occupancy per room at the coarse step. Required by the predictive
    /// controllers, ignored by the others.
    pub forecast: Option<Vec<OccupancyString>>,
    /// Outside temperature per coarse step.
    pub weather: Vec<f64>,
    pub error_level: f64,
    pub replicate: usize,
    pub seed: u64,
    /// Distance band half-width used to draw the forecast.
    pub tol_used: f64,
}

impl Scenario {
    /// A run with a perfect forecast derived from the truth.
    pub fn perfect(
        day_id: impl Into<String>,
        controller: ControllerKind,
        season: Season,
        truth: Vec<OccupancyString>,
        weather: Vec<f64>,
        tau_coarse: u32,
    ) -> Result<Self> {
        let forecast = truth
            .iter()
            .map(|s| upsample_to_coarse(s, tau_coarse))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            day_id: day_id.into(),
            controller,
            season,
            truth,
            forecast: Some(forecast),
            weather,
            error_level: 0.0,
            replicate: 0,
            seed: 0,
            tol_used: 0.0,
        })
    }

    pub fn validate(&self, cfg: &SimConfig) -> Result<()> {
        let tb = &cfg.timebase;
        let n = cfg.building.n_rooms();
        if self.truth.len() != n {
            return Err(Error::Data(format!(
                "day {}: {} occupancy strings for {n} rooms",
                self.day_id,
                self.truth.len()
            )));
        }
        for s in &self.truth {
            if s.granularity_s() != tb.tau_fine {
                return Err(Error::Granularity {
                    expected: tb.tau_fine,
                    found: s.granularity_s(),
                });
            }
        }
        if self.weather.len() != tb.coarse_per_day() {
            return Err(Error::Data(format!(
                "day {}: {} weather samples, expected {}",
                self.day_id,
                self.weather.len(),
                tb.coarse_per_day()
            )));
        }
        match (&self.forecast, self.controller.is_predictive()) {
            (None, true) => {
                return Err(Error::InvalidArgument(format!(
                    "controller {} needs an occupancy forecast",
                    self.controller
                )))
            }
            (Some(f), _) => {
                ForecastBundle::new(f.clone(), self.weather.clone(), tb.tau_coarse)?;
                if f.len() != n {
                    return Err(Error::Data(format!(
                        "day {}: {} forecast strings for {n} rooms",
                        self.day_id,
                        f.len()
                    )));
                }
            }
            (None, false) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Keep the per-room fine-step trace.
    pub record_trace: bool,
}

/// State of one room at one fine step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: u32,
    pub room: usize,
    pub t_hv: f64,
    pub t_oc: f64,
    pub t_un: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub heater: bool,
    pub fan: bool,
    /// Whole-plant power at this step, kW.
    pub power_kw: f64,
    pub occupied: bool,
    pub pmv: f64,
    pub discomfort: f64,
}

/// Controls applied during one coarse step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedStep {
    pub t_s: u32,
    pub u: f64,
    pub r: f64,
    pub v: Vec<f64>,
    /// Whether the plan behind these controls converged; always true for
    /// non-predictive controllers.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub day_id: String,
    pub controller: ControllerKind,
    pub season: Season,
    pub error_level: f64,
    pub replicate: usize,
    pub seed: u64,
    pub tol_used: f64,
    /// kWh.
    pub energy_kwh: f64,
    /// Mean over rooms that were occupied at some point of the day, %.
    pub discomfort_pct: f64,
    pub room_discomfort_pct: Vec<f64>,
    /// Plant plus heater power at every fine step, kW.
    pub power_kw: Vec<f64>,
    pub tau_fine: u32,
    pub applied: Vec<AppliedStep>,
    pub solves: usize,
    pub unconverged: usize,
    /// Predicted comfort penalty of the first step of each plan.
    pub planned_penalty: Vec<f64>,
    /// The same penalty evaluated on the realized states and true occupancy.
    pub realized_penalty: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<Vec<TraceRow>>,
}

impl ScenarioResult {
    /// Summed absolute gap between planned and realized first-step penalties.
    pub fn penalty_gap(&self) -> f64 {
        self.planned_penalty
            .iter()
            .zip(&self.realized_penalty)
            .map(|(p, r)| (p - r).abs())
            .sum()
    }

    /// Whether two results agree on everything except the scenario labels.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.energy_kwh.to_bits() == other.energy_kwh.to_bits()
            && self.discomfort_pct.to_bits() == other.discomfort_pct.to_bits()
            && self.power_kw == other.power_kw
            && self.room_discomfort_pct == other.room_discomfort_pct
            && self.applied == other.applied
    }
}

/// Simulates one day in closed loop.
pub fn run_day(scenario: &Scenario, cfg: &SimConfig, opts: &RunOptions) -> Result<ScenarioResult> {
    scenario.validate(cfg)?;
    let tb = cfg.timebase;
    let n = cfg.building.n_rooms();
    let rooms = RoomModel::for_building(&cfg.building);
    let plant = cfg.building.plant;
    let spec = cfg.comfort.spec(scenario.season);
    let kind = scenario.controller;
    let two_region = kind.has_devices();
    let tau_f = tb.tau_fine as f64;
    let substeps = tb.fine_per_coarse();

    let truth_coarse = scenario
        .truth
        .iter()
        .map(|s| upsample_to_coarse(s, tb.tau_coarse))
        .collect::<Result<Vec<_>>>()?;
    let bundle = match (&scenario.forecast, kind.is_predictive()) {
        (Some(f), true) => Some(ForecastBundle::new(f.clone(), scenario.weather.clone(), tb.tau_coarse)?),
        _ => None,
    };
    let mut planner = kind.mpc_mode().map(|m| RecedingPlanner::new(m, scenario.season));

    let mut states = vec![RoomState::uniform(scenario.weather[0] + cfg.initial.offset); n];
    let mut spots = vec![SpotState::default(); n];
    let mut comfort: Vec<ComfortSeries> = (0..n).map(|_| ComfortSeries::with_capacity(tb.fine_per_day())).collect();
    let mut power = Vec::with_capacity(tb.fine_per_day());
    let mut applied = Vec::with_capacity(tb.coarse_per_day());
    let mut trace = opts.record_trace.then(|| Vec::with_capacity(tb.fine_per_day() * n));
    let (mut solves, mut unconverged) = (0, 0);
    let mut planned_penalty = Vec::new();
    let mut realized_penalty = Vec::new();

    let baseline_velocity = plant.diffuser_air_velocity;
    let (device_ll, device_ul) = cfg.spot.device_band(spec.p_ll, spec.p_ul);
    let boundary_discomfort = |s: &RoomState| discomfort_instant(pmv(s.t_oc(), baseline_velocity, &spec), spec.p_ll, spec.p_ul);

    for k in 0..tb.coarse_per_day() {
        let t0 = k as u32 * tb.tau_coarse;
        let t_ex = scenario.weather[k];
        let (controls, converged): (ControlVector, bool) = match kind {
            ControllerKind::Schedule => (
                schedule_controller(t0, scenario.season, &cfg.schedule, n, plant.reuse_ratio),
                true,
            ),
            ControllerKind::Reactive => {
                // the previous window is the latest complete measurement
                let occupied: Vec<bool> = truth_coarse.iter().map(|s| k > 0 && s.get(k - 1)).collect();
                (
                    reactive_controller(&occupied, scenario.season, &cfg.schedule, plant.reuse_ratio),
                    true,
                )
            }
            ControllerKind::Ns | ControllerKind::Sa => {
                let planner = planner.as_mut().expect("predictive controller has a planner");
                let plan = planner.plan(k, &states, bundle.as_ref().expect("validated forecast"), cfg)?;
                solves += 1;
                if !plan.converged {
                    unconverged += 1;
                }
                planned_penalty.push(plan.step_penalty[0]);
                (plan.controls_at(k), plan.converged)
            }
        };
        applied.push(AppliedStep {
            t_s: t0,
            u: controls.u,
            r: controls.r,
            v: controls.v.clone(),
            converged,
        });
        let start: Vec<RoomState> = states.clone();

        for i in 0..substeps {
            let fine = k * substeps + i;
            let occupied: Vec<bool> = scenario.truth.iter().map(|s| s.get(fine)).collect();
            if two_region {
                for j in 0..n {
                    // the device senses temperature, not its own draft
                    let local = pmv(states[j].t_oc(), baseline_velocity, &spec);
                    spots[j] = spot_react(local, occupied[j], spots[j], device_ll, device_ul, cfg.spot.hysteresis);
                }
            }
            let t_hv: Vec<f64> = states.iter().map(|s| s.t_hv).collect();
            let t_mx = mixed_air_temperature(controls.r, return_air_temperature(&controls.v, &t_hv), t_ex);
            let heater_kw: f64 = (0..n)
                .filter(|&j| spots[j].heater())
                .map(|j| rooms[j].params.q_heater)
                .sum();
            let p = plant_power(controls.u, &controls.v, t_mx, &plant, heater_kw).power;
            power.push(p);
            for j in 0..n {
                let velocity = if spots[j].fan() {
                    plant.fan_air_velocity
                } else {
                    baseline_velocity
                };
                let level = pmv(states[j].t_oc(), velocity, &spec);
                let d = discomfort_instant(level, spec.p_ll, spec.p_ul);
                comfort[j].push(level, d, occupied[j]);
                if let Some(rows) = trace.as_mut() {
                    rows.push(TraceRow {
                        t_s: fine as u32 * tb.tau_fine,
                        room: j,
                        t_hv: states[j].t_hv,
                        t_oc: states[j].t_oc(),
                        t_un: states[j].t_un,
                        u: controls.u,
                        v: controls.v[j],
                        r: controls.r,
                        heater: spots[j].heater(),
                        fan: spots[j].fan(),
                        power_kw: p,
                        occupied: occupied[j],
                        pmv: level,
                        discomfort: d,
                    });
                }
            }
            for j in 0..n {
                let ex = ExogenousInputs::new(t_ex, occupied[j]);
                states[j] = if two_region {
                    let duty = if spots[j].heater() { 1.0 } else { 0.0 };
                    rooms[j].step_two_region(&states[j], controls.u, controls.v[j], duty, &ex, tau_f)
                } else {
                    RoomState::uniform(rooms[j].step_single_region(states[j].t_hv, controls.u, controls.v[j], &ex, tau_f))
                };
            }
        }

        if kind.is_predictive() {
            let realized: f64 = (0..n)
                .filter(|&j| truth_coarse[j].get(k))
                .map(|j| 0.5 * cfg.mpc.penalty_weight * (boundary_discomfort(&start[j]) + boundary_discomfort(&states[j])))
                .sum();
            realized_penalty.push(realized);
        }
    }

    let room_discomfort_pct: Vec<f64> = comfort.iter().map(discomfort_percent).collect();
    let occupied_rooms: Vec<usize> = (0..n).filter(|&j| scenario.truth[j].count_ones() > 0).collect();
    let discomfort_pct = if occupied_rooms.is_empty() {
        0.0
    } else {
        occupied_rooms.iter().map(|&j| room_discomfort_pct[j]).sum::<f64>() / occupied_rooms.len() as f64
    };
    Ok(ScenarioResult {
        day_id: scenario.day_id.clone(),
        controller: kind,
        season: scenario.season,
        error_level: scenario.error_level,
        replicate: scenario.replicate,
        seed: scenario.seed,
        tol_used: scenario.tol_used,
        energy_kwh: daily_energy(&power, tau_f),
        discomfort_pct,
        room_discomfort_pct,
        power_kw: power,
        tau_fine: tb.tau_fine,
        applied,
        solves,
        unconverged,
        planned_penalty,
        realized_penalty,
        trace,
    })
}

/// Seed for the forecast draw of one room on one day at one error level.
pub fn derive_seed(master: u64, day_id: &str, level: f64, room: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((day_id.len() as u64).to_le_bytes());
    h.update(day_id.as_bytes());
    h.update(level.to_bits().to_le_bytes());
    h.update((room as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Measured data for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayData {
    pub day_id: String,
    pub truth: Vec<OccupancyString>,
    pub weather: Vec<f64>,
}

/// Pairs the first occupancy days, in file order, with consecutive weather days.
/// Occupancy days beyond the weather only serve as forecast history.
pub fn assemble_days(strings: &[OccupancyString], weather: &[f64], cfg: &SimConfig) -> Result<Vec<DayData>> {
    let n_rooms = cfg.building.n_rooms();
    let per_day = cfg.timebase.coarse_per_day();
    let mut groups: Vec<(String, Vec<OccupancyString>)> = Vec::new();
    for s in strings {
        match groups.iter_mut().find(|(d, _)| *d == s.day_id) {
            Some((_, g)) => g.push(s.clone()),
            None => groups.push((s.day_id.clone(), vec![s.clone()])),
        }
    }
    if weather.len() % per_day != 0 {
        return Err(Error::Data(format!("weather length {} is not whole days", weather.len())));
    }
    let n_days = weather.len() / per_day;
    if groups.len() < n_days {
        return Err(Error::Data(format!(
            "{} weather days but only {} occupancy days",
            n_days,
            groups.len()
        )));
    }
    groups
        .into_iter()
        .take(n_days)
        .enumerate()
        .map(|(i, (day_id, truth))| {
            if truth.len() != n_rooms {
                return Err(Error::Data(format!(
                    "day {day_id}: {} rooms in occupancy data, building has {n_rooms}",
                    truth.len()
                )));
            }
            Ok(DayData {
                day_id,
                truth,
                weather: weather[i * per_day..(i + 1) * per_day].to_vec(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub season: Season,
    pub days: Vec<DayData>,
    pub controllers: Vec<ControllerKind>,
    pub error_levels: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Keep the fine-step trace of every run.
    pub record_trace: bool,
}

/// Replicates of one controller on one day at one error level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub day_id: String,
    pub error_level: f64,
    pub controller: ControllerKind,
    pub replicates: Vec<ScenarioResult>,
    /// Share of replicates inside the box around the perfect-forecast run, %.
    pub robustness: f64,
    /// Band half-width used per room.
    pub tol_used: Vec<f64>,
    pub with_replacement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub day_id: String,
    pub error_level: f64,
    pub reason: String,
}

/// Mean and spread of robustness over days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub controller: ControllerKind,
    pub error_level: f64,
    pub mean: f64,
    /// Sample standard deviation over days; 0 for a single day.
    pub std: f64,
    pub n_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub season: Season,
    pub master_seed: u64,
    pub replicates: usize,
    pub error_levels: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    /// Perfect-forecast run per day and controller.
    pub baselines: Vec<ScenarioResult>,
    pub cells: Vec<CellResult>,
    pub skipped: Vec<SkippedCell>,
}

impl SweepResult {
    pub fn baseline(&self, day_id: &str, controller: ControllerKind) -> Option<&ScenarioResult> {
        self.baselines
            .iter()
            .find(|b| b.day_id == day_id && b.controller == controller)
    }

    pub fn cell(&self, day_id: &str, level: f64, controller: ControllerKind) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.day_id == day_id && c.error_level == level && c.controller == controller)
    }

    pub fn robustness_summary(&self) -> Vec<RobustnessSummary> {
        let mut out = Vec::new();
        for &controller in &self.controllers {
            for &level in &self.error_levels {
                let values: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.controller == controller && c.error_level == level)
                    .map(|c| c.robustness)
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&values);
                out.push(RobustnessSummary {
                    controller,
                    error_level: level,
                    mean,
                    std,
                    n_days: values.len(),
                });
            }
        }
        out
    }

    pub fn mean_robustness(&self, controller: ControllerKind, level: f64) -> Option<f64> {
        self.robustness_summary()
            .into_iter()
            .find(|s| s.controller == controller && s.error_level == level)
            .map(|s| s.mean)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

struct Draw {
    forecasts: Vec<Vec<OccupancyString>>,
    tol_used: Vec<f64>,
    with_replacement: bool,
    seeds: Vec<u64>,
}

fn draw_forecasts(
    day: &DayData,
    level: f64,
    spec: &SweepSpec,
    matrix: &ErrorMatrix,
    cfg: &SimConfig,
) -> Result<Draw> {
    let tau_c = cfg.timebase.tau_coarse;
    let mut per_room = Vec::with_capacity(day.truth.len());
    let mut tol_used = Vec::new();
    let mut seeds = Vec::new();
    let mut with_replacement = false;
    for (j, truth) in day.truth.iter().enumerate() {
        let seed = derive_seed(spec.master_seed, &day.day_id, level, j);
        seeds.push(seed);
        if level == 0.0 {
            per_room.push(vec![upsample_to_coarse(truth, tau_c)?; spec.replicates]);
            tol_used.push(0.0);
            continue;
        }
        let (reference, _) = matrix.select_reference(truth)?;
        let inj = matrix.inject_errors(reference, level, spec.replicates, seed, &cfg.injection)?;
        with_replacement |= inj.with_replacement;
        tol_used.push(inj.tol_used);
        per_room.push(
            inj.indices
                .iter()
                .map(|&i| upsample_to_coarse(&matrix.strings()[i], tau_c).map(|s| s.with_ids(&day.day_id, &truth.room_id)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let forecasts = (0..spec.replicates)
        .map(|r| per_room.iter().map(|f| f[r].clone()).collect())
        .collect();
    Ok(Draw {
        forecasts,
        tol_used,
        with_replacement,
        seeds,
    })
}

/// Runs every controller on every day: once with a perfect forecast, then
/// `replicates` times per error level with forecasts drawn from the error matrix.
///
/// A (day, level) whose forecasts cannot be drawn is recorded as skipped for the
/// predictive controllers; the others run without a forecast.
pub fn run_sweep(spec: &SweepSpec, matrix: &ErrorMatrix, cfg: &SimConfig) -> Result<SweepResult> {
    if spec.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be >= 1".into()));
    }
    if spec.days.is_empty() || spec.controllers.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one day and one controller".into()));
    }
    if let Some(bad) = spec.error_levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidArgument(format!("error level {bad} outside [0, 1]")));
    }

    let mut scenarios: Vec<Scenario> = Vec::new();
    let mut skipped = Vec::new();
    let mut cell_meta: BTreeMap<(usize, usize), (Vec<f64>, bool)> = BTreeMap::new();
    for day in &spec.days {
        for &controller in &spec.controllers {
            scenarios.push(Scenario::perfect(
                day.day_id.clone(),
                controller,
                spec.season,
                day.truth.clone(),
                day.weather.clone(),
                cfg.timebase.tau_coarse,
            )?);
        }
    }
    let n_baselines = scenarios.len();
    for (di, day) in spec.days.iter().enumerate() {
        for (li, &level) in spec.error_levels.iter().enumerate() {
            let draw = match draw_forecasts(day, level, spec, matrix, cfg) {
                Ok(d) => Some(d),
                Err(e @ Error::NoCandidates { .. }) => {
                    skipped.push(SkippedCell {
                        day_id: day.day_id.clone(),
                        error_level: level,
                        reason: e.to_string(),
                    });
                    None
                }
                Err(e) => return Err(e),
            };
            if let Some(d) = &draw {
                cell_meta.insert((di, li), (d.tol_used.clone(), d.with_replacement));
            }
            for &controller in &spec.controllers {
                if draw.is_none() && controller.is_predictive() {
                    continue;
                }
                for r in 0..spec.replicates {
                    scenarios.push(Scenario {
                        day_id: day.day_id.clone(),
                        controller,
                        season: spec.season,
                        truth: day.truth.clone(),
                        forecast: draw.as_ref().map(|d| d.forecasts[r].clone()),
                        weather: day.weather.clone(),
                        error_level: level,
                        replicate: r,
                        seed: draw.as_ref().map_or(0, |d| d.seeds[0]),
                        tol_used: draw.as_ref().map_or(0.0, |d| d.tol_used.iter().cloned().fold(0.0, f64::max)),
                    });
                }
            }
        }
    }

    let opts = RunOptions {
        record_trace: spec.record_trace,
    };
    let run_all = || -> Result<Vec<ScenarioResult>> {
        scenarios.par_iter().map(|s| run_day(s, cfg, &opts)).collect()
    };
    let results = match spec.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?
            .install(run_all)?,
        None => run_all()?,
    };

    let mut results = results.into_iter();
    let baselines: Vec<ScenarioResult> = results.by_ref().take(n_baselines).collect();
    let mut grouped: BTreeMap<(String, u64, ControllerKind), Vec<ScenarioResult>> = BTreeMap::new();
    for r in results {
        grouped
            .entry((r.day_id.clone(), r.error_level.to_bits(), r.controller))
            .or_default()
            .push(r);
    }
    let mut cells = Vec::new();
    for (di, day) in spec.days.iter().enumerate() {
        for (li, &level) in spec.error_levels.iter().enumerate() {
            for &controller in &spec.controllers {
                let Some(reps) = grouped.remove(&(day.day_id.clone(), level.to_bits(), controller)) else {
                    continue;
                };
                let base = baselines
                    .iter()
                    .find(|b| b.day_id == day.day_id && b.controller == controller)
                    .expect("baseline for every day and controller");
                let bx = RobustnessBox::new(&cfg.robustness, base.energy_kwh, base.discomfort_pct);
                let points: Vec<(f64, f64)> = reps.iter().map(|r| (r.energy_kwh, r.discomfort_pct)).collect();
                let (tol_used, with_replacement) = cell_meta.get(&(di, li)).cloned().unwrap_or_default();
                cells.push(CellResult {
                    day_id: day.day_id.clone(),
                    error_level: level,
                    controller,
                    robustness: robustness(&points, &bx)?,
                    replicates: reps,
                    tol_used,
                    with_replacement,
                });
            }
        }
    }
    Ok(SweepResult {
        season: spec.season,
        master_seed: spec.master_seed,
        replicates: spec.replicates,
        error_levels: spec.error_levels.clone(),
        controllers: spec.controllers.clone(),
        baselines,
        cells,
        skipped,
    })
}

/// Reproduction record written next to sweep outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub season: Option<Season>,
    pub master_seed: u64,
    pub config_hash: String,
    pub controllers: Vec<ControllerKind>,
    pub error_levels: Vec<f64>,
    pub replicates: usize,
    pub days: Vec<String>,
    pub skipped: Vec<SkippedCell>,
    pub horizon_policy: String,
    pub forecast_draws: String,
    pub with_replacement_cells: Vec<String>,
}

impl Manifest {
    pub fn for_sweep(command: &str, sweep: &SweepResult, cfg: &SimConfig, days: Vec<String>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            season: Some(sweep.season),
            master_seed: sweep.master_seed,
            config_hash: cfg.hash_hex(),
            controllers: sweep.controllers.clone(),
            error_levels: sweep.error_levels.clone(),
            replicates: sweep.replicates,
            days,
            skipped: sweep.skipped.clone(),
            horizon_policy: HORIZON_POLICY.to_string(),
            forecast_draws: FORECAST_DRAWS.to_string(),
            with_replacement_cells: sweep
                .cells
                .iter()
                .filter(|c| c.with_replacement && c.controller.is_predictive())
                .map(|c| format!("{}@{}:{}", c.day_id, c.error_level, c.controller))
                .collect(),
        }
    }
}

pub const HORIZON_POLICY: &str = "shrinking same-day horizon, re-planned every coarse step";
pub const FORECAST_DRAWS: &str = "independent draw per room, seeded by (master seed, day, level, room)";
