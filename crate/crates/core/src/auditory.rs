//! Interaural time difference model and the azimuth likelihood it induces.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::geometry::{wrap_deg, PolarGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditoryConfig {
    /// Head radius in metres.
    pub head_radius: f64,
    /// Speed of sound in m/s.
    pub speed_of_sound: f64,
    /// Standard deviation of the ITD observation noise, seconds.
    pub itd_noise: f64,
}

impl Default for AuditoryConfig {
    fn default() -> Self {
        Self {
            head_radius: 0.0875,
            speed_of_sound: 343.0,
            itd_noise: 30e-6,
        }
    }
}

impl AuditoryConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("head_radius", self.head_radius),
            ("speed_of_sound", self.speed_of_sound),
            ("itd_noise", self.itd_noise),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest magnitude of a plausible observation: ITD at 90 degrees plus six noise deviations.
    pub fn sanity_bound(&self) -> f64 {
        itd(90.0, self) + 6.0 * self.itd_noise
    }
}

/// Mirrors an egocentric azimuth about the interaural axis into [-90, 90].
pub fn lateral_angle(theta: f64) -> f64 {
    let t = wrap_deg(theta);
    if t > 90.0 {
        180.0 - t
    } else if t < -90.0 {
        -180.0 - t
    } else {
        t
    }
}

/// Spherical-head ITD in seconds for a source at egocentric azimuth `theta`
/// (degrees, positive to the right, so positive ITD means right ear leads).
pub fn itd(theta: f64, cfg: &AuditoryConfig) -> f64 {
    let lat = lateral_angle(theta).to_radians();
    cfg.head_radius * (lat + lat.sin()) / cfg.speed_of_sound
}

/// Predicted ITD per azimuth bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ItdTable {
    values: Vec<f64>,
}

impl ItdTable {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, azimuth_bin: usize) -> f64 {
        self.values[azimuth_bin]
    }
}

pub fn itd_table(grid: &PolarGrid, cfg: &AuditoryConfig) -> ItdTable {
    ItdTable {
        values: (0..grid.num_azimuth_bins)
            .map(|j| itd(grid.azimuth_center(j), cfg))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItdObservation {
    /// Observed ITD in seconds.
    pub itd: f64,
}

/// Noisy observation of the ITD for a source at `true_bearing`.
pub fn sample_itd<R: Rng + ?Sized>(true_bearing: f64, cfg: &AuditoryConfig, rng: &mut R) -> ItdObservation {
    let noise: f64 = rng.sample(StandardNormal);
    observe_with_noise(true_bearing, cfg, noise)
}

/// Observation with an explicit standard-normal draw `z`.
pub fn observe_with_noise(true_bearing: f64, cfg: &AuditoryConfig, z: f64) -> ItdObservation {
    ItdObservation {
        itd: itd(true_bearing, cfg) + cfg.itd_noise * z,
    }
}

/// Gaussian log density of the observation for each azimuth bin.
pub fn log_likelihood_row(obs: &ItdObservation, table: &ItdTable, cfg: &AuditoryConfig) -> Vec<f64> {
    let var = cfg.itd_noise * cfg.itd_noise;
    let norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
    table
        .values
        .iter()
        .map(|pred| {
            let d = obs.itd - pred;
            norm - d * d / (2.0 * var)
        })
        .collect()
}

/// Unnormalized log-likelihood map, identical for every range bin.
pub fn audio_likelihood(obs: &ItdObservation, grid: &PolarGrid, cfg: &AuditoryConfig) -> BeliefMap {
    audio_likelihood_with(obs, grid, &itd_table(grid, cfg), cfg)
}

pub fn audio_likelihood_with(
    obs: &ItdObservation,
    grid: &PolarGrid,
    table: &ItdTable,
    cfg: &AuditoryConfig,
) -> BeliefMap {
    let row = log_likelihood_row(obs, table, cfg);
    let mut values = Vec::with_capacity(grid.num_cells());
    for _ in 0..grid.num_range_bins {
        values.extend_from_slice(&row);
    }
    BeliefMap::from_log_values(*grid, values).expect("row times range bins fills the grid")
}
