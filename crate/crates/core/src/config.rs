//! Building, plant, timebase and comfort parameters, plus the flat key-value
//! configuration format they are loaded from.
//!
//! The format is one `key = value` per line, `#` starts a comment, and scopes are
//! expressed with dotted keys (`building.rooms_per_zone = 5`). Every key is
//! optional; anything not given takes its default. Unknown keys are rejected so
//! that typos do not silently fall back to defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds in one simulated day.
pub const DAY_SECONDS: u32 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Winter,
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Summer => "summer",
            Season::Winter => "winter",
        })
    }
}

impl FromStr for Season {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "summer" => Ok(Season::Summer),
            "winter" => Ok(Season::Winter),
            other => Err(Error::InvalidArgument(format!(
                "unknown season `{other}` (expected summer or winter)"
            ))),
        }
    }
}

/// Air properties shared by every room.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirParams {
    /// Density, kg/m³.
    pub rho: f64,
    /// Specific heat, kJ/(kg·K).
    pub sigma: f64,
}

impl Default for AirParams {
    fn default() -> Self {
        Self {
            rho: 1.204,
            sigma: 1.003,
        }
    }
}

/// Per-room thermal parameters for both the single- and two-region models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomParams {
    /// Thermal capacity C, kJ/K.
    pub capacity: f64,
    /// Heat transfer coefficient to outside, kJ/(K·s).
    pub alpha_ex: f64,
    /// Appliance heat load, kW.
    pub q_ap: f64,
    /// Occupant heat load, kW.
    pub q_oc: f64,
    /// Thermal capacity of the occupied region, kJ/K.
    pub capacity_occupied: f64,
    /// Coupling between occupied and unoccupied regions, kJ/(K·s).
    pub alpha_in: f64,
    /// Personal heater output, kW.
    pub q_heater: f64,
}

impl Default for RoomParams {
    fn default() -> Self {
        Self {
            capacity: 2000.0,
            alpha_ex: 0.048,
            q_ap: 0.1,
            q_oc: 0.1,
            capacity_occupied: 200.0,
            alpha_in: 0.1425,
            q_heater: 0.7,
        }
    }
}

/// Air-handling plant parameters and actuation limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Heating coil coefficient, kJ/(m³·K).
    pub eta_h: f64,
    /// Cooling coil coefficient, kJ/(m³·K).
    pub eta_c: f64,
    /// Supply fan coefficient, kW·s²/m⁶.
    pub eta_f: f64,
    /// Per-room flow limit, m³/s.
    pub v_max: f64,
    /// Supply temperature bounds, °C.
    pub u_min: f64,
    pub u_max: f64,
    /// Air velocity at the occupant with the desk fan running, m/s.
    pub fan_air_velocity: f64,
    /// Air velocity at the occupant from the diffuser alone, m/s.
    pub diffuser_air_velocity: f64,
    /// Share of return air recirculated by the air-handling unit.
    pub reuse_ratio: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            eta_h: 1.34,
            eta_c: 0.40,
            eta_f: 0.65,
            v_max: 0.5,
            u_min: 12.0,
            u_max: 35.0,
            fan_air_velocity: 1.0,
            diffuser_air_velocity: 0.1,
            reuse_ratio: 0.8,
        }
    }
}

/// Zones, rooms and plant of the simulated building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingSpec {
    /// Number of rooms served by each VAV zone.
    pub rooms_per_zone: Vec<usize>,
    /// One entry per room, zone-major order.
    pub rooms: Vec<RoomParams>,
    pub air: AirParams,
    pub plant: PlantParams,
}

impl Default for BuildingSpec {
    fn default() -> Self {
        Self {
            rooms_per_zone: vec![5],
            rooms: vec![RoomParams::default(); 5],
            air: AirParams::default(),
            plant: PlantParams::default(),
        }
    }
}

impl BuildingSpec {
    pub fn n_zones(&self) -> usize {
        self.rooms_per_zone.len()
    }

    pub fn n_rooms(&self) -> usize {
        self.rooms.len()
    }

    /// Zone index of a room (rooms are numbered zone by zone).
    pub fn zone_of(&self, room: usize) -> usize {
        let mut acc = 0;
        for (zone, &n) in self.rooms_per_zone.iter().enumerate() {
            acc += n;
            if room < acc {
                return zone;
            }
        }
        panic!("room index {room} out of range for {} rooms", self.n_rooms());
    }

    /// Supply-air heat exchange coefficient ρσ/n_r for a room, kJ/(m³·K).
    pub fn supply_coeff(&self, room: usize) -> f64 {
        let n_r = self.rooms_per_zone[self.zone_of(room)] as f64;
        self.air.rho * self.air.sigma / n_r
    }
}

/// The three control timescales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timebase {
    /// Personal comfort device reaction interval, s.
    pub tau_fine: u32,
    /// Flow update interval, s.
    pub tau_coarse: u32,
    /// Supply temperature update interval, s.
    pub tau_u: u32,
}

impl Default for Timebase {
    fn default() -> Self {
        Self {
            tau_fine: 30,
            tau_coarse: 600,
            tau_u: 3600,
        }
    }
}

impl Timebase {
    pub fn fine_per_coarse(&self) -> usize {
        (self.tau_coarse / self.tau_fine) as usize
    }

    pub fn coarse_per_u(&self) -> usize {
        (self.tau_u / self.tau_coarse) as usize
    }

    pub fn fine_per_day(&self) -> usize {
        (DAY_SECONDS / self.tau_fine) as usize
    }

    pub fn coarse_per_day(&self) -> usize {
        (DAY_SECONDS / self.tau_coarse) as usize
    }

    pub fn u_blocks_per_day(&self) -> usize {
        (DAY_SECONDS / self.tau_u) as usize
    }
}

/// Linear comfort model coefficients and the acceptable band, for one season.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortSpec {
    pub p_ll: f64,
    pub p_ul: f64,
    /// PMV per °C.
    pub p1: f64,
    /// PMV·s/m.
    pub p2: f64,
    /// PMV·s²/m².
    pub p3: f64,
    /// PMV offset, equal to `p1 * t_neutral`.
    pub p4: f64,
    /// Neutral temperature, °C.
    pub t_neutral: f64,
}

/// Seasonal comfort configuration from which a [`ComfortSpec`] is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComfortConfig {
    pub p_ll: f64,
    pub p_ul: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub t_neutral_summer: f64,
    pub t_neutral_winter: f64,
}

impl Default for ComfortConfig {
    fn default() -> Self {
        Self {
            p_ll: -0.5,
            p_ul: 0.5,
            p1: 0.5,
            p2: 1.1,
            p3: 0.05,
            t_neutral_summer: 24.0,
            t_neutral_winter: 22.0,
        }
    }
}

impl ComfortConfig {
    pub fn spec(&self, season: Season) -> ComfortSpec {
        let t_neutral = match season {
            Season::Summer => self.t_neutral_summer,
            Season::Winter => self.t_neutral_winter,
        };
        ComfortSpec {
            p_ll: self.p_ll,
            p_ul: self.p_ul,
            p1: self.p1,
            p2: self.p2,
            p3: self.p3,
            p4: self.p1 * t_neutral,
            t_neutral,
        }
    }
}

/// Fixed operating point used by the schedule-based and reactive controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub start_hour: u32,
    pub end_hour: u32,
    pub u_summer: f64,
    pub u_winter: f64,
    /// Per-room flow while running, m³/s.
    pub flow: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            start_hour: 9,
            end_hour: 18,
            u_summer: 15.0,
            u_winter: 20.0,
            flow: 0.236,
        }
    }
}

impl ScheduleParams {
    pub fn supply_temperature(&self, season: Season) -> f64 {
        match season {
            Season::Summer => self.u_summer,
            Season::Winter => self.u_winter,
        }
    }
}

/// Planner and trajectory solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcParams {
    /// Comfort penalty, kWh per unit PMV excess per coarse step.
    pub penalty_weight: f64,
    /// Spacing of the supply-temperature candidate grid, °C.
    pub u_grid_step: f64,
    pub u_summer_min: f64,
    pub u_summer_max: f64,
    pub u_winter_min: f64,
    pub u_winter_max: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Consecutive small-change iterations required to declare convergence.
    pub patience: usize,
    /// Number of upcoming hour blocks whose supply temperature is re-searched at
    /// each hour boundary.
    pub refine_blocks: usize,
    /// Half-width of the re-search window around the warm start, °C.
    pub refine_window: f64,
    /// The planner aims this far inside the comfort band, PMV units.
    pub comfort_margin: f64,
}

impl Default for MpcParams {
    fn default() -> Self {
        Self {
            penalty_weight: 1000.0,
            u_grid_step: 0.5,
            u_summer_min: 12.0,
            u_summer_max: 20.0,
            u_winter_min: 20.0,
            u_winter_max: 35.0,
            max_iters: 200,
            rel_tol: 1e-3,
            patience: 5,
            refine_blocks: 2,
            refine_window: 1.0,
            comfort_margin: 0.05,
        }
    }
}

impl MpcParams {
    /// Candidate supply-temperature range for a season, clipped to the plant bounds.
    pub fn u_range(&self, season: Season, plant: &PlantParams) -> (f64, f64) {
        let (lo, hi) = match season {
            Season::Summer => (self.u_summer_min, self.u_summer_max),
            Season::Winter => (self.u_winter_min, self.u_winter_max),
        };
        (lo.max(plant.u_min), hi.min(plant.u_max))
    }
}

/// Personal comfort device reaction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotParams {
    /// Hysteresis half-width, PMV units.
    pub hysteresis: f64,
    /// The device works against the comfort band shrunk by this much on each side,
    /// so its switching dead zone sits inside the band rather than straddling the
    /// edge. PMV units.
    pub band_offset: f64,
}

impl Default for SpotParams {
    fn default() -> Self {
        Self {
            hysteresis: 0.05,
            band_offset: 0.1,
        }
    }
}

impl SpotParams {
    /// Band handed to the device for a comfort band `[p_ll, p_ul]`.
    pub fn device_band(&self, p_ll: f64, p_ul: f64) -> (f64, f64) {
        (p_ll + self.band_offset, p_ul - self.band_offset)
    }
}

/// Erroneous-forecast sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionParams {
    pub tol_initial: f64,
    pub tol_step: f64,
    pub tol_max: f64,
    /// Longest mismatch run (fine samples) still counted as a point error.
    pub point_run_max: usize,
}

impl Default for InjectionParams {
    fn default() -> Self {
        Self {
            tol_initial: 0.01,
            tol_step: 0.005,
            tol_max: 0.03,
            point_run_max: 2,
        }
    }
}

/// Acceptable deviation from the perfect-prediction outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessParams {
    /// kWh.
    pub energy_tol: f64,
    /// Percentage points.
    pub discomfort_tol: f64,
}

impl Default for RobustnessParams {
    fn default() -> Self {
        Self {
            energy_tol: 20.0,
            discomfort_tol: 5.0,
        }
    }
}

/// Initial room temperature at midnight relative to the outside temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialParams {
    pub offset: f64,
}

impl Default for InitialParams {
    fn default() -> Self {
        Self { offset: 2.0 }
    }
}

/// Everything a simulation run needs besides data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimConfig {
    pub building: BuildingSpec,
    pub timebase: Timebase,
    pub comfort: ComfortConfig,
    pub schedule: ScheduleParams,
    pub mpc: MpcParams,
    pub spot: SpotParams,
    pub injection: InjectionParams,
    pub robustness: RobustnessParams,
    pub initial: InitialParams,
}

/// Parsed `key = value` document, keys in sorted order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDocument {
    entries: BTreeMap<String, String>,
}

impl KvDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {}", lineno + 1), "empty key"));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::config(key, "duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for KvDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Tracks which keys have been read so leftovers can be reported as unknown.
struct Reader<'a> {
    doc: &'a KvDocument,
    used: BTreeSet<String>,
}

impl<'a> Reader<'a> {
    fn new(doc: &'a KvDocument) -> Self {
        Self {
            doc,
            used: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        let v = self.doc.get(key)?;
        self.used.insert(key.to_string());
        Some(v)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::config(key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(Error::config(key, format!("`{v}` is not finite")));
                }
                Ok(x)
            }
        }
    }

    fn uint<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::config(key, format!("`{v}` is not a non-negative integer"))
            }),
        }
    }

    fn uint_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        Error::config(key, format!("`{v}` is not a list of integers"))
                    })
                })
                .collect(),
        }
    }

    fn unknown_keys(&self) -> Vec<&'a str> {
        self.doc
            .entries
            .keys()
            .filter(|k| !self.used.contains(*k))
            .map(String::as_str)
            .collect()
    }
}

fn positive(key: &str, x: f64) -> Result<()> {
    if x > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be > 0, got {x}")))
    }
}

fn non_negative(key: &str, x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be >= 0, got {x}")))
    }
}

fn unit_interval(key: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::config(key, format!("must lie in [0, 1], got {x}")))
    }
}

const ROOM_FIELDS: [&str; 7] = [
    "capacity",
    "alpha_ex",
    "q_ap",
    "q_oc",
    "capacity_occupied",
    "alpha_in",
    "q_heater",
];

fn room_field(p: &RoomParams, name: &str) -> f64 {
    match name {
        "capacity" => p.capacity,
        "alpha_ex" => p.alpha_ex,
        "q_ap" => p.q_ap,
        "q_oc" => p.q_oc,
        "capacity_occupied" => p.capacity_occupied,
        "alpha_in" => p.alpha_in,
        "q_heater" => p.q_heater,
        _ => unreachable!("unknown room field {name}"),
    }
}

fn set_room_field(p: &mut RoomParams, name: &str, x: f64) {
    match name {
        "capacity" => p.capacity = x,
        "alpha_ex" => p.alpha_ex = x,
        "q_ap" => p.q_ap = x,
        "q_oc" => p.q_oc = x,
        "capacity_occupied" => p.capacity_occupied = x,
        "alpha_in" => p.alpha_in = x,
        "q_heater" => p.q_heater = x,
        _ => unreachable!("unknown room field {name}"),
    }
}

/// Builds a fully populated, validated [`SimConfig`] from a key-value document.
pub fn validate_config(doc: &KvDocument) -> Result<SimConfig> {
    let d = SimConfig::default();
    let mut r = Reader::new(doc);

    // building
    let rooms_per_zone = r.uint_list("building.rooms_per_zone", &d.building.rooms_per_zone)?;
    let n_zones = r.uint("building.n_zones", rooms_per_zone.len())?;
    if n_zones == 0 {
        return Err(Error::config("building.n_zones", "must be >= 1"));
    }
    let rooms_per_zone = if rooms_per_zone.len() == 1 && n_zones > 1 {
        vec![rooms_per_zone[0]; n_zones]
    } else {
        rooms_per_zone
    };
    if rooms_per_zone.len() != n_zones {
        return Err(Error::config(
            "building.rooms_per_zone",
            format!(
                "has {} entries but building.n_zones = {n_zones}",
                rooms_per_zone.len()
            ),
        ));
    }
    if let Some(z) = rooms_per_zone.iter().position(|&n| n == 0) {
        return Err(Error::config(
            "building.rooms_per_zone",
            format!("zone {z} has no rooms"),
        ));
    }
    let n_rooms: usize = rooms_per_zone.iter().sum();

    let mut common = RoomParams::default();
    for field in ROOM_FIELDS {
        let key = format!("room.{field}");
        let x = r.f64(&key, room_field(&common, field))?;
        set_room_field(&mut common, field, x);
    }
    let mut rooms = vec![common; n_rooms];
    for (i, room) in rooms.iter_mut().enumerate() {
        for field in ROOM_FIELDS {
            let key = format!("room.{}.{field}", i + 1);
            let x = r.f64(&key, room_field(room, field))?;
            set_room_field(room, field, x);
        }
    }
    for (i, room) in rooms.iter().enumerate() {
        for field in ROOM_FIELDS {
            positive(&format!("room.{}.{field}", i + 1), room_field(room, field))?;
        }
        if room.capacity_occupied >= room.capacity {
            return Err(Error::config(
                format!("room.{}.capacity_occupied", i + 1),
                format!(
                    "C_oc must be < C (got C_oc = {}, C = {})",
                    room.capacity_occupied, room.capacity
                ),
            ));
        }
    }

    let air = AirParams {
        rho: r.f64("air.rho", d.building.air.rho)?,
        sigma: r.f64("air.sigma", d.building.air.sigma)?,
    };
    positive("air.rho", air.rho)?;
    positive("air.sigma", air.sigma)?;

    let dp = d.building.plant;
    let plant = PlantParams {
        eta_h: r.f64("plant.eta_h", dp.eta_h)?,
        eta_c: r.f64("plant.eta_c", dp.eta_c)?,
        eta_f: r.f64("plant.eta_f", dp.eta_f)?,
        v_max: r.f64("plant.v_max", dp.v_max)?,
        u_min: r.f64("plant.u_min", dp.u_min)?,
        u_max: r.f64("plant.u_max", dp.u_max)?,
        fan_air_velocity: r.f64("plant.fan_air_velocity", dp.fan_air_velocity)?,
        diffuser_air_velocity: r.f64("plant.diffuser_air_velocity", dp.diffuser_air_velocity)?,
        reuse_ratio: r.f64("plant.reuse_ratio", dp.reuse_ratio)?,
    };
    positive("plant.eta_h", plant.eta_h)?;
    positive("plant.eta_c", plant.eta_c)?;
    positive("plant.eta_f", plant.eta_f)?;
    positive("plant.v_max", plant.v_max)?;
    positive("plant.fan_air_velocity", plant.fan_air_velocity)?;
    non_negative("plant.diffuser_air_velocity", plant.diffuser_air_velocity)?;
    unit_interval("plant.reuse_ratio", plant.reuse_ratio)?;
    if plant.u_min > plant.u_max {
        return Err(Error::config(
            "plant.u_min",
            format!("u_min ({}) exceeds u_max ({})", plant.u_min, plant.u_max),
        ));
    }

    // timebase
    let timebase = Timebase {
        tau_fine: r.uint("timebase.tau_fine", d.timebase.tau_fine)?,
        tau_coarse: r.uint("timebase.tau_coarse", d.timebase.tau_coarse)?,
        tau_u: r.uint("timebase.tau_u", d.timebase.tau_u)?,
    };
    for (key, v) in [
        ("timebase.tau_fine", timebase.tau_fine),
        ("timebase.tau_coarse", timebase.tau_coarse),
        ("timebase.tau_u", timebase.tau_u),
    ] {
        if v == 0 {
            return Err(Error::config(key, "must be > 0"));
        }
    }
    if timebase.tau_coarse % timebase.tau_fine != 0 {
        return Err(Error::config(
            "timebase.tau_coarse",
            format!(
                "tau_coarse not divisible by tau_fine ({} vs {})",
                timebase.tau_coarse, timebase.tau_fine
            ),
        ));
    }
    if timebase.tau_u % timebase.tau_coarse != 0 {
        return Err(Error::config(
            "timebase.tau_u",
            format!(
                "tau_u not divisible by tau_coarse ({} vs {})",
                timebase.tau_u, timebase.tau_coarse
            ),
        ));
    }
    if DAY_SECONDS % timebase.tau_u != 0 {
        return Err(Error::config(
            "timebase.tau_u",
            format!("day length not divisible by tau_u ({})", timebase.tau_u),
        ));
    }

    // comfort
    let dc = d.comfort;
    let comfort = ComfortConfig {
        p_ll: r.f64("comfort.p_ll", dc.p_ll)?,
        p_ul: r.f64("comfort.p_ul", dc.p_ul)?,
        p1: r.f64("comfort.p1", dc.p1)?,
        p2: r.f64("comfort.p2", dc.p2)?,
        p3: r.f64("comfort.p3", dc.p3)?,
        t_neutral_summer: r.f64("comfort.t_neutral_summer", dc.t_neutral_summer)?,
        t_neutral_winter: r.f64("comfort.t_neutral_winter", dc.t_neutral_winter)?,
    };
    if comfort.p_ll >= comfort.p_ul {
        return Err(Error::config(
            "comfort.p_ll",
            format!("P_ll must be < P_ul ({} vs {})", comfort.p_ll, comfort.p_ul),
        ));
    }
    positive("comfort.p1", comfort.p1)?;

    // controllers
    let ds = d.schedule;
    let schedule = ScheduleParams {
        start_hour: r.uint("schedule.start_hour", ds.start_hour)?,
        end_hour: r.uint("schedule.end_hour", ds.end_hour)?,
        u_summer: r.f64("schedule.u_summer", ds.u_summer)?,
        u_winter: r.f64("schedule.u_winter", ds.u_winter)?,
        flow: r.f64("schedule.flow", ds.flow)?,
    };
    if schedule.start_hour >= schedule.end_hour || schedule.end_hour > 24 {
        return Err(Error::config(
            "schedule.start_hour",
            format!(
                "need start_hour < end_hour <= 24, got {}..{}",
                schedule.start_hour, schedule.end_hour
            ),
        ));
    }
    for (key, u) in [
        ("schedule.u_summer", schedule.u_summer),
        ("schedule.u_winter", schedule.u_winter),
    ] {
        if u < plant.u_min || u > plant.u_max {
            return Err(Error::config(
                key,
                format!("{u} outside plant bounds [{}, {}]", plant.u_min, plant.u_max),
            ));
        }
    }
    if schedule.flow < 0.0 || schedule.flow > plant.v_max {
        return Err(Error::config(
            "schedule.flow",
            format!("{} outside [0, v_max = {}]", schedule.flow, plant.v_max),
        ));
    }

    let dm = d.mpc;
    let mpc = MpcParams {
        penalty_weight: r.f64("mpc.penalty_weight", dm.penalty_weight)?,
        u_grid_step: r.f64("mpc.u_grid_step", dm.u_grid_step)?,
        u_summer_min: r.f64("mpc.u_summer_min", dm.u_summer_min)?,
        u_summer_max: r.f64("mpc.u_summer_max", dm.u_summer_max)?,
        u_winter_min: r.f64("mpc.u_winter_min", dm.u_winter_min)?,
        u_winter_max: r.f64("mpc.u_winter_max", dm.u_winter_max)?,
        max_iters: r.uint("mpc.max_iters", dm.max_iters)?,
        rel_tol: r.f64("mpc.rel_tol", dm.rel_tol)?,
        patience: r.uint("mpc.patience", dm.patience)?,
        refine_blocks: r.uint("mpc.refine_blocks", dm.refine_blocks)?,
        refine_window: r.f64("mpc.refine_window", dm.refine_window)?,
        comfort_margin: r.f64("mpc.comfort_margin", dm.comfort_margin)?,
    };
    positive("mpc.penalty_weight", mpc.penalty_weight)?;
    positive("mpc.u_grid_step", mpc.u_grid_step)?;
    positive("mpc.rel_tol", mpc.rel_tol)?;
    non_negative("mpc.refine_window", mpc.refine_window)?;
    non_negative("mpc.comfort_margin", mpc.comfort_margin)?;
    if 2.0 * mpc.comfort_margin >= comfort.p_ul - comfort.p_ll {
        return Err(Error::config(
            "mpc.comfort_margin",
            "margin leaves no room inside the comfort band",
        ));
    }
    if mpc.max_iters == 0 {
        return Err(Error::config("mpc.max_iters", "must be >= 1"));
    }
    if mpc.patience == 0 {
        return Err(Error::config("mpc.patience", "must be >= 1"));
    }
    for (season, key) in [
        (Season::Summer, "mpc.u_summer_min"),
        (Season::Winter, "mpc.u_winter_min"),
    ] {
        let (lo, hi) = mpc.u_range(season, &plant);
        if lo > hi {
            return Err(Error::config(
                key,
                format!("empty candidate range [{lo}, {hi}] after clipping to plant bounds"),
            ));
        }
    }

    let spot = SpotParams {
        hysteresis: r.f64("spot.hysteresis", d.spot.hysteresis)?,
        band_offset: r.f64("spot.band_offset", d.spot.band_offset)?,
    };
    non_negative("spot.hysteresis", spot.hysteresis)?;
    non_negative("spot.band_offset", spot.band_offset)?;
    if 2.0 * (spot.hysteresis + spot.band_offset) >= comfort.p_ul - comfort.p_ll {
        return Err(Error::config(
            "spot.hysteresis",
            "hysteresis band wider than the comfort band",
        ));
    }

    let di = d.injection;
    let injection = InjectionParams {
        tol_initial: r.f64("injection.tol_initial", di.tol_initial)?,
        tol_step: r.f64("injection.tol_step", di.tol_step)?,
        tol_max: r.f64("injection.tol_max", di.tol_max)?,
        point_run_max: r.uint("injection.point_run_max", di.point_run_max)?,
    };
    non_negative("injection.tol_initial", injection.tol_initial)?;
    positive("injection.tol_step", injection.tol_step)?;
    if injection.tol_max < injection.tol_initial {
        return Err(Error::config(
            "injection.tol_max",
            format!(
                "tol_max ({}) below tol_initial ({})",
                injection.tol_max, injection.tol_initial
            ),
        ));
    }

    let robustness = RobustnessParams {
        energy_tol: r.f64("robustness.energy_tol", d.robustness.energy_tol)?,
        discomfort_tol: r.f64("robustness.discomfort_tol", d.robustness.discomfort_tol)?,
    };
    positive("robustness.energy_tol", robustness.energy_tol)?;
    positive("robustness.discomfort_tol", robustness.discomfort_tol)?;

    let initial = InitialParams {
        offset: r.f64("initial.offset", d.initial.offset)?,
    };

    if let Some(key) = r.unknown_keys().first() {
        return Err(Error::config(*key, "unknown key"));
    }

    Ok(SimConfig {
        building: BuildingSpec {
            rooms_per_zone,
            rooms,
            air,
            plant,
        },
        timebase,
        comfort,
        schedule,
        mpc,
        spot,
        injection,
        robustness,
        initial,
    })
}

impl SimConfig {
    /// Parses and validates configuration text.
    pub fn from_text(text: &str) -> Result<Self> {
        validate_config(&KvDocument::parse(text)?)
    }

    /// Serializes every setting as a key-value document that re-validates to an
    /// identical config.
    pub fn to_kv(&self) -> KvDocument {
        let mut doc = KvDocument::new();
        let b = &self.building;
        doc.set("building.n_zones", b.n_zones());
        doc.set(
            "building.rooms_per_zone",
            b.rooms_per_zone
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        let common = b.rooms[0];
        for field in ROOM_FIELDS {
            doc.set(format!("room.{field}"), room_field(&common, field));
        }
        for (i, room) in b.rooms.iter().enumerate().skip(1) {
            for field in ROOM_FIELDS {
                let x = room_field(room, field);
                if x != room_field(&common, field) {
                    doc.set(format!("room.{}.{field}", i + 1), x);
                }
            }
        }
        doc.set("air.rho", b.air.rho);
        doc.set("air.sigma", b.air.sigma);
        let p = &b.plant;
        doc.set("plant.eta_h", p.eta_h);
        doc.set("plant.eta_c", p.eta_c);
        doc.set("plant.eta_f", p.eta_f);
        doc.set("plant.v_max", p.v_max);
        doc.set("plant.u_min", p.u_min);
        doc.set("plant.u_max", p.u_max);
        doc.set("plant.fan_air_velocity", p.fan_air_velocity);
        doc.set("plant.diffuser_air_velocity", p.diffuser_air_velocity);
        doc.set("plant.reuse_ratio", p.reuse_ratio);
        doc.set("timebase.tau_fine", self.timebase.tau_fine);
        doc.set("timebase.tau_coarse", self.timebase.tau_coarse);
        doc.set("timebase.tau_u", self.timebase.tau_u);
        let c = &self.comfort;
        doc.set("comfort.p_ll", c.p_ll);
        doc.set("comfort.p_ul", c.p_ul);
        doc.set("comfort.p1", c.p1);
        doc.set("comfort.p2", c.p2);
        doc.set("comfort.p3", c.p3);
        doc.set("comfort.t_neutral_summer", c.t_neutral_summer);
        doc.set("comfort.t_neutral_winter", c.t_neutral_winter);
        let s = &self.schedule;
        doc.set("schedule.start_hour", s.start_hour);
        doc.set("schedule.end_hour", s.end_hour);
        doc.set("schedule.u_summer", s.u_summer);
        doc.set("schedule.u_winter", s.u_winter);
        doc.set("schedule.flow", s.flow);
        let m = &self.mpc;
        doc.set("mpc.penalty_weight", m.penalty_weight);
        doc.set("mpc.u_grid_step", m.u_grid_step);
        doc.set("mpc.u_summer_min", m.u_summer_min);
        doc.set("mpc.u_summer_max", m.u_summer_max);
        doc.set("mpc.u_winter_min", m.u_winter_min);
        doc.set("mpc.u_winter_max", m.u_winter_max);
        doc.set("mpc.max_iters", m.max_iters);
        doc.set("mpc.rel_tol", m.rel_tol);
        doc.set("mpc.patience", m.patience);
        doc.set("mpc.refine_blocks", m.refine_blocks);
        doc.set("mpc.refine_window", m.refine_window);
        doc.set("mpc.comfort_margin", m.comfort_margin);
        doc.set("spot.hysteresis", self.spot.hysteresis);
        doc.set("spot.band_offset", self.spot.band_offset);
        let inj = &self.injection;
        doc.set("injection.tol_initial", inj.tol_initial);
        doc.set("injection.tol_step", inj.tol_step);
        doc.set("injection.tol_max", inj.tol_max);
        doc.set("injection.point_run_max", inj.point_run_max);
        doc.set("robustness.energy_tol", self.robustness.energy_tol);
        doc.set("robustness.discomfort_tol", self.robustness.discomfort_tol);
        doc.set("initial.offset", self.initial.offset);
        doc
    }

    /// SHA-256 of the canonical key-value serialization, hex encoded.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_kv().to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
