//! Binary occupancy strings, the pairwise error matrix, and realistic
//! erroneous-forecast sampling.
//!
//! An erroneous forecast is always another real (or synthetic) day from the
//! dataset whose normalized Hamming distance to the day under study matches the
//! requested error level. Random bit flips would put occupancy in the middle of the
//! night; drawing a whole valid day does not.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{InjectionParams, DAY_SECONDS};
use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

/// One day of binary room occupancy at a fixed sampling interval.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct OccupancyString {
    words: Vec<u64>,
    len: usize,
    granularity_s: u32,
    pub day_id: String,
    pub room_id: String,
}

impl fmt::Debug for OccupancyString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OccupancyString")
            .field("day_id", &self.day_id)
            .field("room_id", &self.room_id)
            .field("granularity_s", &self.granularity_s)
            .field("ones", &self.count_ones())
            .field("len", &self.len)
            .finish()
    }
}

/// Length of a day string at a sampling interval, or an error if the day does not
/// divide evenly.
pub fn day_length(granularity_s: u32) -> Result<usize> {
    if granularity_s == 0 || DAY_SECONDS % granularity_s != 0 {
        return Err(Error::InvalidArgument(format!(
            "granularity {granularity_s} s does not divide a day"
        )));
    }
    Ok((DAY_SECONDS / granularity_s) as usize)
}

impl OccupancyString {
    pub fn from_bits(
        bits: &[bool],
        granularity_s: u32,
        day_id: impl Into<String>,
        room_id: impl Into<String>,
    ) -> Result<Self> {
        let expected = day_length(granularity_s)?;
        if bits.len() != expected {
            return Err(Error::OccupancyLength {
                expected,
                found: bits.len(),
                granularity_s,
            });
        }
        let mut words = vec![0u64; bits.len().div_ceil(WORD_BITS)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
        Ok(Self {
            words,
            len: bits.len(),
            granularity_s,
            day_id: day_id.into(),
            room_id: room_id.into(),
        })
    }

    /// Parses a string of `'0'`/`'1'` characters.
    pub fn parse(text: &str, granularity_s: u32) -> Result<Self> {
        let expected = day_length(granularity_s)?;
        let found = text.chars().count();
        if found != expected {
            return Err(Error::OccupancyLength {
                expected,
                found,
                granularity_s,
            });
        }
        let bits = text
            .chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                symbol => Err(Error::OccupancySymbol { position, symbol }),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits, granularity_s, "", "")
    }

    pub fn with_ids(mut self, day_id: impl Into<String>, room_id: impl Into<String>) -> Self {
        self.day_id = day_id.into();
        self.room_id = room_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn granularity_s(&self) -> u32 {
        self.granularity_s
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<bool> {
        self.iter().collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.count_ones() as f64 / self.len as f64
    }

    /// `day_id:room_id`, or just the day when no room is set.
    pub fn label(&self) -> String {
        if self.room_id.is_empty() {
            self.day_id.clone()
        } else {
            format!("{}:{}", self.day_id, self.room_id)
        }
    }

    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        out.clear_padding();
        out
    }

    fn clear_padding(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn check_comparable(&self, other: &Self) -> Result<()> {
        if self.granularity_s != other.granularity_s {
            return Err(Error::Granularity {
                expected: self.granularity_s,
                found: other.granularity_s,
            });
        }
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(())
    }

    fn mismatches(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }
}

impl fmt::Display for OccupancyString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

pub fn parse_occupancy_string(text: &str, granularity_s: u32) -> Result<OccupancyString> {
    OccupancyString::parse(text, granularity_s)
}

/// Collapses a fine string to `coarse_granularity_s`: a window is unoccupied only if
/// every fine sample in it is unoccupied.
pub fn upsample_to_coarse(fine: &OccupancyString, coarse_granularity_s: u32) -> Result<OccupancyString> {
    if coarse_granularity_s < fine.granularity_s || coarse_granularity_s % fine.granularity_s != 0 {
        return Err(Error::Granularity {
            expected: coarse_granularity_s,
            found: fine.granularity_s,
        });
    }
    let factor = (coarse_granularity_s / fine.granularity_s) as usize;
    let bits: Vec<bool> = (0..fine.len / factor)
        .map(|k| (k * factor..(k + 1) * factor).any(|i| fine.get(i)))
        .collect();
    OccupancyString::from_bits(
        &bits,
        coarse_granularity_s,
        fine.day_id.clone(),
        fine.room_id.clone(),
    )
}

/// Number of differing positions and that count divided by the length.
pub fn hamming_distance(a: &OccupancyString, b: &OccupancyString) -> Result<(usize, f64)> {
    a.check_comparable(b)?;
    let count = a.mismatches(b);
    Ok((count, count as f64 / a.len as f64))
}

/// Symmetric matrix of normalized pairwise Hamming distances over a dataset.
#[derive(Debug, Clone)]
pub struct ErrorMatrix {
    strings: Vec<OccupancyString>,
    dist: Vec<f64>,
}

/// Erroneous forecasts drawn for one reference string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    /// Dataset indices of the selected strings, one per replicate.
    pub indices: Vec<usize>,
    /// Normalized distance of each selected string to the reference.
    pub distances: Vec<f64>,
    /// Half-width of the accepted distance band.
    pub tol_used: f64,
    pub pool_size: usize,
    pub with_replacement: bool,
}

impl ErrorMatrix {
    pub fn build(strings: Vec<OccupancyString>) -> Result<Self> {
        let n = strings.len();
        if n < 2 {
            return Err(Error::TooFewStrings(n));
        }
        for s in &strings[1..] {
            strings[0].check_comparable(s)?;
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            strings[i].mismatches(&strings[j]) as f64 / strings[i].len as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            strings,
            dist: rows.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.strings.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.dist[i * n..(i + 1) * n]
    }

    pub fn strings(&self) -> &[OccupancyString] {
        &self.strings
    }

    pub fn labels(&self) -> Vec<String> {
        self.strings.iter().map(OccupancyString::label).collect()
    }

    /// Index of the dataset string closest to `day` (lowest index on ties) and its
    /// normalized distance.
    pub fn select_reference(&self, day: &OccupancyString) -> Result<(usize, f64)> {
        let mut best = (0, f64::INFINITY);
        for (i, s) in self.strings.iter().enumerate() {
            let (_, d) = hamming_distance(day, s)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best)
    }

    /// Draws `replicates` dataset strings whose distance to the reference is within a
    /// band around `target`, widening the band stepwise when it is empty.
    ///
    /// Sampling is without replacement unless the pool is smaller than `replicates`.
    /// A target of exactly zero returns the reference itself for every replicate.
    pub fn inject_errors(
        &self,
        reference_idx: usize,
        target: f64,
        replicates: usize,
        seed: u64,
        params: &InjectionParams,
    ) -> Result<Injection> {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::InvalidArgument(format!(
                "target error {target} outside [0, 1]"
            )));
        }
        if replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be >= 1".into()));
        }
        if reference_idx >= self.n() {
            return Err(Error::InvalidArgument(format!(
                "reference index {reference_idx} out of range {}",
                self.n()
            )));
        }
        if target == 0.0 {
            return Ok(Injection {
                indices: vec![reference_idx; replicates],
                distances: vec![0.0; replicates],
                tol_used: 0.0,
                pool_size: 1,
                with_replacement: true,
            });
        }

        let row = self.row(reference_idx);
        let mut tol = params.tol_initial;
        let pool = loop {
            // small epsilon so band edges like 0.09 are not lost to rounding
            let pool: Vec<usize> = (0..self.n())
                .filter(|&j| (row[j] - target).abs() <= tol + 1e-12)
                .collect();
            if !pool.is_empty() {
                break pool;
            }
            tol += params.tol_step;
            if tol > params.tol_max + 1e-12 {
                return Err(Error::NoCandidates {
                    target,
                    max_tol: params.tol_max,
                });
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let with_replacement = pool.len() < replicates;
        let indices: Vec<usize> = if with_replacement {
            (0..replicates)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect()
        } else {
            index::sample(&mut rng, pool.len(), replicates)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        };
        Ok(Injection {
            distances: indices.iter().map(|&j| row[j]).collect(),
            indices,
            tol_used: tol,
            pool_size: pool.len(),
            with_replacement,
        })
    }
}

/// Counts of mismatch runs split by length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorClasses {
    /// Runs no longer than the point-error limit.
    pub point: usize,
    /// Longer runs.
    pub burst: usize,
}

/// Classifies maximal runs of mismatching samples as point or burst errors.
pub fn classify_errors(
    truth: &OccupancyString,
    forecast: &OccupancyString,
    point_run_max: usize,
) -> Result<ErrorClasses> {
    truth.check_comparable(forecast)?;
    let mut classes = ErrorClasses::default();
    let mut run = 0usize;
    let close = |run: usize, c: &mut ErrorClasses| {
        if run == 0 {
        } else if run <= point_run_max {
            c.point += 1;
        } else {
            c.burst += 1;
        }
    };
    for i in 0..truth.len() {
        if truth.get(i) != forecast.get(i) {
            run += 1;
        } else {
            close(run, &mut classes);
            run = 0;
        }
    }
    close(run, &mut classes);
    Ok(classes)
}
