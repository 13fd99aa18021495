//! Comfort, energy, and robustness metrics.

use serde::{Deserialize, Serialize};

use crate::config::{ComfortSpec, RobustnessParams};
use crate::error::{Error, Result};

/// Linear predicted mean vote from occupied-region temperature and air velocity.
pub fn pmv(t_oc: f64, air_velocity: f64, spec: &ComfortSpec) -> f64 {
    spec.p1 * t_oc - spec.p2 * air_velocity + spec.p3 * air_velocity * air_velocity - spec.p4
}

/// Distance of a PMV value outside the comfort band; zero inside it.
pub fn discomfort_instant(pmv: f64, p_ll: f64, p_ul: f64) -> f64 {
    0.0f64.max(p_ll - pmv).max(pmv - p_ul)
}

/// Per-instant comfort trace for one room over one day.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComfortSeries {
    pub pmv: Vec<f64>,
    pub discomfort: Vec<f64>,
    pub occupied: Vec<bool>,
}

impl ComfortSeries {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            pmv: Vec::with_capacity(n),
            discomfort: Vec::with_capacity(n),
            occupied: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, pmv: f64, discomfort: f64, occupied: bool) {
        self.pmv.push(pmv);
        self.discomfort.push(discomfort);
        self.occupied.push(occupied);
    }

    pub fn len(&self) -> usize {
        self.pmv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmv.is_empty()
    }
}

/// Share of occupied instants with non-zero discomfort, in percent.
///
/// Unoccupied instants are ignored entirely; a room that is never occupied scores 0.
pub fn discomfort_percent(series: &ComfortSeries) -> f64 {
    let (occupied, uncomfortable) = series
        .discomfort
        .iter()
        .zip(&series.occupied)
        .filter(|(_, &o)| o)
        .fold((0usize, 0usize), |(n, bad), (&d, _)| {
            (n + 1, bad + usize::from(d != 0.0))
        });
    if occupied == 0 {
        0.0
    } else {
        100.0 * uncomfortable as f64 / occupied as f64
    }
}

/// Energy in kWh from a power series in kW sampled every `tau` seconds.
pub fn daily_energy(power_kw: &[f64], tau: f64) -> f64 {
    power_kw.iter().map(|p| p * tau / 3600.0).sum()
}

/// Acceptable region around the perfect-prediction outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessBox {
    /// kWh.
    pub energy_tol: f64,
    /// Percentage points.
    pub discomfort_tol: f64,
    pub baseline_energy: f64,
    pub baseline_discomfort: f64,
}

impl RobustnessBox {
    pub fn new(params: &RobustnessParams, baseline_energy: f64, baseline_discomfort: f64) -> Self {
        Self {
            energy_tol: params.energy_tol,
            discomfort_tol: params.discomfort_tol,
            baseline_energy,
            baseline_discomfort,
        }
    }

    pub fn contains(&self, energy: f64, discomfort: f64) -> bool {
        (energy - self.baseline_energy).abs() <= self.energy_tol
            && (discomfort - self.baseline_discomfort).abs() <= self.discomfort_tol
    }
}

/// Percentage of `(energy kWh, discomfort %)` points inside the box.
pub fn robustness(points: &[(f64, f64)], bx: &RobustnessBox) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "robustness needs at least one point".into(),
        ));
    }
    let inside = points.iter().filter(|(e, d)| bx.contains(*e, *d)).count();
    Ok(100.0 * inside as f64 / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ComfortConfig, Season};
    use approx::assert_abs_diff_eq;

    fn summer() -> ComfortSpec {
        ComfortConfig::default().spec(Season::Summer)
    }

    #[test]
    fn pmv_examples() {
        assert_abs_diff_eq!(pmv(24.0, 0.0, &summer()), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pmv(25.0, 0.0, &summer()), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pmv(24.0, 1.0, &summer()), -1.05, epsilon = 1e-12);
    }

    #[test]
    fn discomfort_examples() {
        assert_eq!(discomfort_instant(0.0, -0.5, 0.5), 0.0);
        assert_abs_diff_eq!(discomfort_instant(0.7, -0.5, 0.5), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(discomfort_instant(-0.9, -0.5, 0.5), 0.4, epsilon = 1e-12);
        assert_eq!(discomfort_instant(0.5, -0.5, 0.5), 0.0);
        assert_eq!(discomfort_instant(-0.5, -0.5, 0.5), 0.0);
    }

    #[test]
    fn discomfort_percent_examples() {
        let mut s = ComfortSeries::default();
        for i in 0..10 {
            s.push(0.0, if i < 2 { 0.3 } else { 0.0 }, true);
        }
        // discomfort while nobody is in the room is ignored
        s.push(2.0, 1.5, false);
        assert_abs_diff_eq!(discomfort_percent(&s), 20.0, epsilon = 1e-12);

        let mut empty = ComfortSeries::default();
        empty.push(3.0, 2.5, false);
        assert_eq!(discomfort_percent(&empty), 0.0);

        let mut fine = ComfortSeries::default();
        fine.push(0.1, 0.0, true);
        assert_eq!(discomfort_percent(&fine), 0.0);
    }

    #[test]
    fn energy_examples() {
        assert_abs_diff_eq!(daily_energy(&[10.0; 6], 600.0), 10.0, epsilon = 1e-12);
        assert_eq!(daily_energy(&[0.0; 144], 600.0), 0.0);
        let alternating: Vec<f64> = (0..144).map(|i| if i % 2 == 0 { 0.0 } else { 5.0 }).collect();
        assert_abs_diff_eq!(daily_energy(&alternating, 600.0), 60.0, epsilon = 1e-9);
    }

    #[test]
    fn robustness_examples() {
        let bx = RobustnessBox::new(&RobustnessParams::default(), 100.0, 10.0);
        let mut pts: Vec<(f64, f64)> = (0..9).map(|i| (100.0 + i as f64, 10.0)).collect();
        pts.extend((0..6).map(|i| (130.0 + i as f64, 10.0)));
        assert_abs_diff_eq!(robustness(&pts, &bx).unwrap(), 60.0);
        assert_eq!(robustness(&[(100.0, 10.0); 15], &bx).unwrap(), 100.0);
        assert!(robustness(&[], &bx).is_err());
    }
}
