//! Training pairs `(τ, ν) -> TF image of the exact CDDPM column`.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::OtfsConfig;
use crate::error::{Error, Result};
use crate::kernel::{cddpm_column_exact, ColumnStrategy};
use crate::sfft::SymplecticFft;

/// Divisors mapping physical `(τ, ν)` to network inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationSpec {
    /// Delay divisor in s.
    pub tau_scale: f64,
    /// Doppler divisor in Hz.
    pub nu_scale: f64,
}

impl NormalizationSpec {
    /// One slot duration for delay, half the subcarrier spacing for Doppler.
    pub fn for_config(cfg: &OtfsConfig) -> Self {
        Self {
            tau_scale: cfg.slot_duration,
            nu_scale: cfg.delta_f / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_scale > 0.0 && self.nu_scale > 0.0 && self.tau_scale.is_finite() && self.nu_scale.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("normalization {self:?}")))
        }
    }

    pub fn normalize(&self, tau: f64, nu: f64) -> (f64, f64) {
        (tau / self.tau_scale, nu / self.nu_scale)
    }

    /// Whether `(τ, ν)` lies in the box `[0, 1] x [-1, 1]` after normalization.
    pub fn in_domain(&self, tau: f64, nu: f64) -> bool {
        let (t, v) = self.normalize(tau, nu);
        (0.0..=1.0).contains(&t) && (-1.0..=1.0).contains(&v)
    }
}

/// Inputs and targets, one sample per row, in the network's precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Normalized `(τ, ν)`.
    pub inputs: Array2<f32>,
    pub target_real: Array2<f32>,
    pub target_imag: Array2<f32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// `isfft(vec⁻¹(r(τ, ν)))` in column-major vector form, double precision.
pub fn tf_target(cfg: &OtfsConfig, fft: &SymplecticFft, tau: f64, nu: f64) -> Vec<crate::grid::C64> {
    let mut values = cddpm_column_exact(cfg, tau, nu, ColumnStrategy::PilotSparse).values;
    fft.isfft_vec(&mut values);
    values
}

/// Samples `(τ, ν)` uniformly over `[0, tau_scale] x [-nu_scale, nu_scale]`.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &OtfsConfig,
    norm: &NormalizationSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<Dataset> {
    cfg.validate()?;
    norm.validate()?;
    let mn = cfg.frame_len();
    let fft = SymplecticFft::new(cfg.m, cfg.n);
    let delay = Uniform::new_inclusive(0.0, norm.tau_scale).expect("positive scale");
    let doppler = Uniform::new_inclusive(-norm.nu_scale, norm.nu_scale).expect("positive scale");
    let mut data = Dataset {
        inputs: Array2::zeros((n_samples, 2)),
        target_real: Array2::zeros((n_samples, mn)),
        target_imag: Array2::zeros((n_samples, mn)),
    };
    for i in 0..n_samples {
        let tau = delay.sample(rng);
        let nu = doppler.sample(rng);
        let (tn, vn) = norm.normalize(tau, nu);
        data.inputs[(i, 0)] = tn as f32;
        data.inputs[(i, 1)] = vn as f32;
        for (j, v) in tf_target(cfg, &fft, tau, nu).iter().enumerate() {
            data.target_real[(i, j)] = v.re as f32;
            data.target_imag[(i, j)] = v.im as f32;
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::substream;

    #[test]
    fn normalization_defaults() {
        let cfg = OtfsConfig::reference();
        let norm = NormalizationSpec::for_config(&cfg);
        assert_eq!(norm.tau_scale, 40e-6);
        assert_eq!(norm.nu_scale, 12_500.0);
        assert!(norm.in_domain(10e-6, -3230.0));
        assert!(!norm.in_domain(41e-6, 0.0));
        assert!(!norm.in_domain(0.0, 13_000.0));
        assert!(NormalizationSpec { tau_scale: 0.0, nu_scale: 1.0 }.validate().is_err());
    }

    #[test]
    fn origin_target_is_flat() {
        let cfg = OtfsConfig::new(8, 8).with_pilot(0, 0, 4.0);
        let fft = SymplecticFft::new(8, 8);
        let t = tf_target(&cfg, &fft, 0.0, 0.0);
        for v in &t {
            assert!((v.norm() - 2.0 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_in_box_and_energy_preserved() {
        let cfg = OtfsConfig::new(8, 8);
        let norm = NormalizationSpec::for_config(&cfg);
        let data = generate_dataset(&cfg, &norm, 50, &mut substream(3, 0)).unwrap();
        assert_eq!(data.len(), 50);
        let mut check = substream(3, 0);
        let delay = Uniform::new_inclusive(0.0, norm.tau_scale).unwrap();
        let doppler = Uniform::new_inclusive(-norm.nu_scale, norm.nu_scale).unwrap();
        for i in 0..50 {
            let (tn, vn) = (data.inputs[(i, 0)], data.inputs[(i, 1)]);
            assert!((0.0..=1.0).contains(&tn) && (-1.0..=1.0).contains(&vn));
            let (tau, nu) = (delay.sample(&mut check), doppler.sample(&mut check));
            let energy = cddpm_column_exact(&cfg, tau, nu, ColumnStrategy::PilotSparse).norm_sqr();
            let target: f64 = data.target_real.row(i).iter().chain(data.target_imag.row(i))
                .map(|&v| (v as f64).powi(2))
                .sum();
            assert!((target - energy).abs() < 1e-5 * energy);
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let cfg = OtfsConfig::new(4, 4);
        let norm = NormalizationSpec::for_config(&cfg);
        let a = generate_dataset(&cfg, &norm, 20, &mut substream(1, 5)).unwrap();
        let b = generate_dataset(&cfg, &norm, 20, &mut substream(1, 5)).unwrap();
        assert_eq!(a, b);
    }
}
