//! OTFS frame geometry and pilot placement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame geometry of a rectangular-pulse OTFS system carrying a single
/// delay-Doppler pilot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtfsConfig {
    /// Number of subcarriers (delay bins).
    pub m: usize,
    /// Number of time slots (Doppler bins).
    pub n: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Slot duration in s. Must satisfy `slot_duration * delta_f == 1`.
    pub slot_duration: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Delay index of the pilot cell.
    pub pilot_delay: usize,
    /// Doppler index of the pilot cell.
    pub pilot_doppler: usize,
    /// Linear pilot energy.
    pub pilot_energy: f64,
}

impl Default for OtfsConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl OtfsConfig {
    /// `m x n` frame at 25 kHz spacing and 5.1 GHz carrier, unit-energy pilot
    /// in cell (0, 0).
    pub fn new(m: usize, n: usize) -> Self {
        let delta_f = 25e3;
        Self {
            m,
            n,
            delta_f,
            slot_duration: 1.0 / delta_f,
            carrier_freq: 5.1e9,
            pilot_delay: 0,
            pilot_doppler: 0,
            pilot_energy: 1.0,
        }
    }

    /// The 16 x 16 frame used in the reference experiments.
    pub fn reference() -> Self {
        Self::new(16, 16)
    }

    pub fn with_pilot(mut self, delay: usize, doppler: usize, energy: f64) -> Self {
        self.pilot_delay = delay;
        self.pilot_doppler = doppler;
        self.pilot_energy = energy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 {
            return Err(Error::InvalidConfig(format!(
                "frame must be at least 2x2, got {}x{}",
                self.m, self.n
            )));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta_f = {}", self.delta_f)));
        }
        if !(self.slot_duration > 0.0 && self.slot_duration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "slot_duration = {}",
                self.slot_duration
            )));
        }
        let product = self.slot_duration * self.delta_f;
        if (product - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "T * delta_f must equal 1 (got {product})"
            )));
        }
        if self.pilot_delay >= self.m || self.pilot_doppler >= self.n {
            return Err(Error::InvalidConfig(format!(
                "pilot cell ({}, {}) outside {}x{} frame",
                self.pilot_delay, self.pilot_doppler, self.m, self.n
            )));
        }
        if !(self.pilot_energy > 0.0 && self.pilot_energy.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pilot energy must be positive, got {}",
                self.pilot_energy
            )));
        }
        if !(self.carrier_freq >= 0.0 && self.carrier_freq.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "carrier_freq = {}",
                self.carrier_freq
            )));
        }
        Ok(())
    }

    /// `M * N`, the length of a vectorized frame.
    pub fn frame_len(&self) -> usize {
        self.m * self.n
    }

    /// Delay resolution `1 / (M delta_f)` in s.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `1 / (N T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n as f64 * self.slot_duration)
    }

    /// Position of the pilot in the vectorized frame.
    pub fn pilot_index(&self) -> usize {
        self.pilot_doppler * self.m + self.pilot_delay
    }
}
