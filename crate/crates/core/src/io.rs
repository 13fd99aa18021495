//! CSV and JSON formats for datasets, matrices, traces and sweep outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::DAY_SECONDS;
use crate::control::ControllerKind;
use crate::engine::{CellResult, ScenarioResult, SweepResult};
use crate::error::{Error, Result};
use crate::occupancy::{day_length, ErrorMatrix, OccupancyString};

/// Reads `day_id,room_id,t0,t1,...`; the sample interval follows from the column
/// count.
pub fn read_occupancy_csv<R: Read>(reader: R) -> Result<Vec<OccupancyString>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "day_id" || &headers[1] != "room_id" {
        return Err(Error::Data(
            "occupancy CSV must start with day_id,room_id,t0,...".into(),
        ));
    }
    let samples = headers.len() - 2;
    if DAY_SECONDS as usize % samples != 0 {
        return Err(Error::Data(format!(
            "occupancy CSV has {samples} samples per day, which does not divide a day"
        )));
    }
    let granularity = DAY_SECONDS / samples as u32;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bits = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(i, c)| match c.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Data(format!(
                    "occupancy row {}: sample {i} is `{other}`, expected 0 or 1",
                    line + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(OccupancyString::from_bits(&bits, granularity, &rec[0], &rec[1])?);
    }
    if out.is_empty() {
        return Err(Error::Data("occupancy CSV has no rows".into()));
    }
    Ok(out)
}

pub fn write_occupancy_csv<W: Write>(writer: W, strings: &[OccupancyString]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let len = strings.first().map_or(0, OccupancyString::len);
    let mut header = vec!["day_id".to_string(), "room_id".to_string()];
    header.extend((0..len).map(|i| format!("t{i}")));
    w.write_record(&header)?;
    for s in strings {
        let mut row = vec![s.day_id.clone(), s.room_id.clone()];
        row.extend(s.iter().map(|b| if b { "1" } else { "0" }.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Outside temperature samples at a fixed interval starting at midnight of the
/// first day.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub tau: u32,
    pub t_ex: Vec<f64>,
}

impl WeatherSeries {
    pub fn per_day(&self) -> usize {
        (DAY_SECONDS / self.tau) as usize
    }

    pub fn n_days(&self) -> usize {
        self.t_ex.len() / self.per_day()
    }

    pub fn day(&self, i: usize) -> Option<&[f64]> {
        let n = self.per_day();
        self.t_ex.get(i * n..(i + 1) * n)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WeatherRow {
    timestamp_s: u64,
    #[serde(rename = "T_ex")]
    t_ex: f64,
}

/// Reads `timestamp_s,T_ex`; timestamps must start at 0, be evenly spaced, and
/// cover whole days.
pub fn read_weather_csv<R: Read>(reader: R) -> Result<WeatherSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<WeatherRow>, _>>()?;
    if rows.len() < 2 {
        return Err(Error::Data("weather CSV needs at least two rows".into()));
    }
    let tau = rows[1].timestamp_s.saturating_sub(rows[0].timestamp_s);
    if rows[0].timestamp_s != 0 || tau == 0 || tau > DAY_SECONDS as u64 {
        return Err(Error::Data(
            "weather timestamps must start at 0 and increase".into(),
        ));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.timestamp_s != i as u64 * tau {
            return Err(Error::Data(format!(
                "weather row {}: timestamp {} breaks the {tau} s spacing",
                i + 1,
                r.timestamp_s
            )));
        }
        if !r.t_ex.is_finite() {
            return Err(Error::Data(format!("weather row {}: non-finite temperature", i + 1)));
        }
    }
    let per_day = day_length(tau as u32).map_err(|_| Error::Data(format!("weather spacing {tau} s does not divide a day")))?;
    if rows.len() % per_day != 0 {
        return Err(Error::Data(format!(
            "weather has {} rows, not a whole number of {per_day}-sample days",
            rows.len()
        )));
    }
    Ok(WeatherSeries {
        tau: tau as u32,
        t_ex: rows.into_iter().map(|r| r.t_ex).collect(),
    })
}

pub fn write_weather_csv<W: Write>(writer: W, weather: &WeatherSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (i, &t_ex) in weather.t_ex.iter().enumerate() {
        w.serialize(WeatherRow {
            timestamp_s: i as u64 * weather.tau as u64,
            t_ex,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Distances with a `day_id` header row and label column.
pub fn write_error_matrix_csv<W: Write>(writer: W, matrix: &ErrorMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let labels = matrix.labels();
    let mut header = vec!["day_id".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(matrix.row(i).iter().map(|d| d.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Labels and rows of an exported distance matrix.
pub fn read_error_matrix_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let labels: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != labels.get(i).map(String::as_str) {
            return Err(Error::Data(format!("matrix row {} label does not match the header", i + 1)));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|c| c.parse::<f64>().map_err(|e| Error::Data(format!("matrix row {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != labels.len() {
            return Err(Error::Data(format!("matrix row {} has {} entries", i + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.len() != labels.len() {
        return Err(Error::Data("matrix is not square".into()));
    }
    Ok((labels, rows))
}

/// One row of the per-step result trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub t_s: u32,
    pub room: String,
    #[serde(rename = "T_hv")]
    pub t_hv: f64,
    #[serde(rename = "T_oc")]
    pub t_oc: f64,
    #[serde(rename = "T_un")]
    pub t_un: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    #[serde(rename = "S_he")]
    pub s_he: u8,
    #[serde(rename = "S_f")]
    pub s_f: u8,
    #[serde(rename = "Po_kW")]
    pub po_kw: f64,
    pub occupied_true: u8,
    pub pmv: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

/// Writes the fine-step trace of a run recorded with `record_trace`.
pub fn write_result_csv<W: Write>(writer: W, result: &ScenarioResult, room_ids: &[String]) -> Result<()> {
    let trace = result
        .trace
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("run was not recorded with a trace".into()))?;
    let mut w = csv::Writer::from_writer(writer);
    for row in trace {
        w.serialize(ResultRow {
            t_s: row.t_s,
            room: room_ids.get(row.room).cloned().unwrap_or_else(|| (row.room + 1).to_string()),
            t_hv: row.t_hv,
            t_oc: row.t_oc,
            t_un: row.t_un,
            u: row.u,
            v: row.v,
            r: row.r,
            s_he: row.heater.into(),
            s_f: row.fan.into(),
            po_kw: row.power_kw,
            occupied_true: row.occupied.into(),
            pmv: row.pmv,
            d: row.discomfort,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_result_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Per-run scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub day_id: String,
    pub controller: ControllerKind,
    pub error_level: f64,
    /// Empty for the perfect-forecast baseline.
    pub replicate: Option<usize>,
    #[serde(rename = "E_kWh")]
    pub e_kwh: f64,
    #[serde(rename = "D_pct")]
    pub d_pct: f64,
    pub solves: usize,
    pub unconverged: usize,
    pub tol_used: f64,
    pub seed: u64,
}

impl SummaryRow {
    pub fn baseline(r: &ScenarioResult) -> Self {
        Self {
            replicate: None,
            ..Self::replicate(r)
        }
    }

    pub fn replicate(r: &ScenarioResult) -> Self {
        Self {
            day_id: r.day_id.clone(),
            controller: r.controller,
            error_level: r.error_level,
            replicate: Some(r.replicate + 1),
            e_kwh: r.energy_kwh,
            d_pct: r.discomfort_pct,
            solves: r.solves,
            unconverged: r.unconverged,
            tol_used: r.tol_used,
            seed: r.seed,
        }
    }

    pub fn is_baseline(&self) -> bool {
        self.replicate.is_none()
    }
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Energy–discomfort point for scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub controller: ControllerKind,
    pub day: String,
    /// Empty for the baseline point.
    pub replicate: Option<usize>,
    #[serde(rename = "E_kWh")]
    pub e_kwh: f64,
    #[serde(rename = "D_pct")]
    pub d_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub controller: ControllerKind,
    pub error_level: f64,
    pub mean: f64,
    pub std: f64,
    pub n_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRobustnessRow {
    pub controller: ControllerKind,
    pub error_level: f64,
    pub day: String,
    pub robustness: f64,
}

/// Scatter points of one error level: the baseline per controller and day at
/// level 0, every replicate otherwise.
pub fn scatter_rows(sweep: &SweepResult, level: f64) -> Vec<ScatterRow> {
    if level == 0.0 {
        return sweep
            .baselines
            .iter()
            .map(|b| ScatterRow {
                controller: b.controller,
                day: b.day_id.clone(),
                replicate: None,
                e_kwh: b.energy_kwh,
                d_pct: b.discomfort_pct,
            })
            .collect();
    }
    sweep
        .cells
        .iter()
        .filter(|c| c.error_level == level)
        .flat_map(|c: &CellResult| {
            c.replicates.iter().map(|r| ScatterRow {
                controller: r.controller,
                day: r.day_id.clone(),
                replicate: Some(r.replicate + 1),
                e_kwh: r.energy_kwh,
                d_pct: r.discomfort_pct,
            })
        })
        .collect()
}

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Controls actually applied each coarse step, `t,u,r,v_room1..,converged`.
pub fn write_plan_csv<W: Write>(writer: W, result: &ScenarioResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n = result.applied.first().map_or(0, |a| a.v.len());
    let mut header = vec!["t".to_string(), "u".to_string(), "r".to_string()];
    header.extend((1..=n).map(|j| format!("v_room{j}")));
    header.push("converged".into());
    w.write_record(&header)?;
    for a in &result.applied {
        let mut row = vec![a.t_s.to_string(), a.u.to_string(), a.r.to_string()];
        row.extend(a.v.iter().map(f64::to_string));
        row.push(a.converged.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Robustness per (controller, level) recomputed from summary rows, with each
/// day's baseline as the box centre. Rows without a matching baseline are ignored.
pub fn robustness_from_summary(
    rows: &[SummaryRow],
    params: &crate::config::RobustnessParams,
) -> Result<(Vec<RobustnessRow>, Vec<DayRobustnessRow>)> {
    let mut baselines = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_baseline()) {
        baselines.insert((r.day_id.clone(), r.controller), (r.e_kwh, r.d_pct));
    }
    let mut cells: BTreeMap<(ControllerKind, u64, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_baseline()) {
        cells
            .entry((r.controller, r.error_level.to_bits(), r.day_id.clone()))
            .or_default()
            .push((r.e_kwh, r.d_pct));
    }
    let mut per_day = Vec::new();
    for ((controller, level, day), points) in &cells {
        let Some(&(e, d)) = baselines.get(&(day.clone(), *controller)) else {
            continue;
        };
        let bx = crate::comfort::RobustnessBox::new(params, e, d);
        per_day.push(DayRobustnessRow {
            controller: *controller,
            error_level: f64::from_bits(*level),
            day: day.clone(),
            robustness: crate::comfort::robustness(points, &bx)?,
        });
    }
    let mut grouped: BTreeMap<(ControllerKind, u64), Vec<f64>> = BTreeMap::new();
    for r in &per_day {
        grouped
            .entry((r.controller, r.error_level.to_bits()))
            .or_default()
            .push(r.robustness);
    }
    let summary = grouped
        .into_iter()
        .map(|((controller, level), values)| {
            let (mean, std) = crate::engine::mean_std(&values);
            RobustnessRow {
                controller,
                error_level: f64::from_bits(level),
                mean,
                std,
                n_days: values.len(),
            }
        })
        .collect();
    Ok((summary, per_day))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
