//! Synthetic weather and occupancy so the pipeline runs without measured data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{Season, DAY_SECONDS};
use crate::error::{Error, Result};
use crate::occupancy::{day_length, ErrorMatrix, OccupancyString};

/// Sinusoidal daily outside temperature with gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherProfile {
    pub season: Season,
    /// °C.
    pub mean: f64,
    /// Half the peak-to-peak diurnal swing, °C. Coldest at midnight.
    pub amplitude: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl WeatherProfile {
    pub fn for_season(season: Season, seed: u64) -> Self {
        let mean = match season {
            Season::Summer => 27.0,
            Season::Winter => -8.0,
        };
        Self {
            season,
            mean,
            amplitude: 4.0,
            noise_sd: 0.5,
            seed,
        }
    }
}

/// Outside temperature every `tau` seconds for `days` consecutive days.
pub fn gen_weather(profile: &WeatherProfile, days: usize, tau: u32) -> Result<Vec<f64>> {
    if days == 0 {
        return Err(Error::InvalidArgument("weather needs at least one day".into()));
    }
    if profile.amplitude < 0.0 || profile.noise_sd < 0.0 {
        return Err(Error::InvalidArgument(
            "weather amplitude and noise must be non-negative".into(),
        ));
    }
    let per_day = day_length(tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let noise = Normal::new(0.0, profile.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..days * per_day)
        .map(|i| {
            let t = (i % per_day) as f64 * tau as f64;
            let phase = 2.0 * std::f64::consts::PI * t / DAY_SECONDS as f64;
            let sample = profile.mean - profile.amplitude * phase.cos();
            if profile.noise_sd > 0.0 {
                sample + noise.sample(&mut rng)
            } else {
                sample
            }
        })
        .collect())
}

/// Office-day presence: arrival, departure, and random mid-day absences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    /// Seconds since midnight.
    pub arrival_mean: f64,
    pub arrival_sd: f64,
    pub departure_mean: f64,
    pub departure_sd: f64,
    /// Expected absences per day.
    pub absence_rate: f64,
    /// Mean absence length, s (exponentially distributed).
    pub absence_mean: f64,
    /// Days whose occupied fraction falls outside this range are redrawn.
    pub min_fraction: f64,
    pub max_fraction: f64,
    pub seed: u64,
}

impl OccupancyProfile {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            arrival_mean: 9.0 * 3600.0,
            arrival_sd: 2700.0,
            departure_mean: 18.0 * 3600.0,
            departure_sd: 2700.0,
            absence_rate: 2.0,
            absence_mean: 2700.0,
            min_fraction: 0.25,
            max_fraction: 0.45,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("occupancy profile: {m}")));
        if self.arrival_mean >= self.departure_mean {
            return bad("mean arrival must precede mean departure");
        }
        if self.arrival_sd < 0.0 || self.departure_sd < 0.0 || self.absence_rate < 0.0 || self.absence_mean < 0.0 {
            return bad("spreads and rates must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.min_fraction) || self.min_fraction > self.max_fraction || self.max_fraction > 1.0 {
            return bad("occupied-fraction range must lie within [0, 1]");
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 100;

pub fn day_label(day: usize) -> String {
    format!("d{:03}", day + 1)
}

pub fn room_label(room: usize) -> String {
    format!("r{}", room + 1)
}

/// Occupancy strings at `granularity_s` for every room of every day, day-major.
///
/// Each room-day draws arrival and departure times, clears absence intervals in
/// between, and is redrawn (at most 100 times) when the times cross or the occupied
/// fraction leaves the profile's range.
pub fn gen_occupancy(
    profile: &OccupancyProfile,
    days: usize,
    rooms: usize,
    granularity_s: u32,
) -> Result<Vec<OccupancyString>> {
    profile.validate()?;
    if days < 2 {
        return Err(Error::InvalidArgument(
            "occupancy generation needs at least two days".into(),
        ));
    }
    if rooms == 0 {
        return Err(Error::InvalidArgument("need at least one room".into()));
    }
    let len = day_length(granularity_s)?;
    let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| Error::InvalidArgument(e.to_string()));
    let arrival = normal(profile.arrival_mean, profile.arrival_sd)?;
    let departure = normal(profile.departure_mean, profile.departure_sd)?;
    let absences = (profile.absence_rate > 0.0)
        .then(|| Poisson::new(profile.absence_rate))
        .transpose()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let duration = (profile.absence_mean > 0.0)
        .then(|| Exp::new(1.0 / profile.absence_mean))
        .transpose()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mut out = Vec::with_capacity(days * rooms);
    for day in 0..days {
        for room in 0..rooms {
            let mut accepted = None;
            for _ in 0..MAX_ATTEMPTS {
                let a = arrival.sample(&mut rng).clamp(0.0, DAY_SECONDS as f64);
                let d = departure.sample(&mut rng).clamp(0.0, DAY_SECONDS as f64);
                if a >= d {
                    continue;
                }
                let mut gaps = Vec::new();
                if let (Some(count), Some(len_dist)) = (absences, duration) {
                    let count: f64 = count.sample(&mut rng);
                    for _ in 0..count as usize {
                        let start = rng.gen_range(a..d);
                        gaps.push((start, start + len_dist.sample(&mut rng)));
                    }
                }
                let bits: Vec<bool> = (0..len)
                    .map(|i| {
                        let t = (i as u64 * granularity_s as u64) as f64;
                        t >= a && t < d && !gaps.iter().any(|&(s, e)| t >= s && t < e)
                    })
                    .collect();
                let fraction = bits.iter().filter(|&&b| b).count() as f64 / len as f64;
                if (profile.min_fraction..=profile.max_fraction).contains(&fraction) {
                    accepted = Some(bits);
                    break;
                }
            }
            let bits = accepted.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "occupancy profile produced no valid day after {MAX_ATTEMPTS} attempts"
                ))
            })?;
            out.push(OccupancyString::from_bits(
                &bits,
                granularity_s,
                day_label(day),
                room_label(room),
            )?);
        }
    }
    Ok(out)
}

/// Smallest and largest off-diagonal distance of a dataset.
pub fn distance_span(strings: &[OccupancyString]) -> Result<(f64, f64)> {
    let m = ErrorMatrix::build(strings.to_vec())?;
    let mut span = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m.n() {
        for j in i + 1..m.n() {
            span = (span.0.min(m.get(i, j)), span.1.max(m.get(i, j)));
        }
    }
    Ok(span)
}
