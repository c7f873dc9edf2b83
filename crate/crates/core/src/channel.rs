//! Ground-truth multipath channels and noisy pilot observations.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), a counter-based stream
//! cipher generator. Every experiment derives independent substreams from a
//! single `u64` seed with [`substream`], so realizations can be generated in
//! any order, or in parallel, and still be bit-identical across runs and
//! platforms.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::OtfsConfig;
use crate::error::{Error, Result};
use crate::grid::C64;
use crate::kernel::{cddpm_column_exact, ColumnStrategy, UpsilonKernel};

pub const SPEED_OF_LIGHT: f64 = 3e8;

/// Largest `M N` for which [`assemble_channel_matrix`] materializes `H_dd`.
pub const MAX_DENSE_FRAME: usize = 4096;

pub type SimRng = ChaCha8Rng;

/// Independent generator for stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One propagation path: delay in s, Doppler in Hz, complex gain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub tau: f64,
    pub nu: f64,
    pub gain: C64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Self {
        Self { paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.tau >= 0.0 && p.tau.is_finite()) || !p.nu.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "path {i}: (tau, nu) = ({}, {})",
                    p.tau, p.nu
                )));
            }
            if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("path {i}: gain {}", p.gain)));
            }
        }
        Ok(())
    }

    /// Stable sort by delay, the canonical order of ground-truth sets.
    pub fn sort_by_delay(&mut self) {
        self.paths.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    }
}

/// High-mobility multipath scenario: fixed delays, exponential power-delay
/// profile, Jakes Doppler spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Path delays in s.
    pub fixed_delays: Vec<f64>,
    /// Decay constant of the exponential power-delay profile in s.
    pub pdp_time_constant: f64,
    pub max_delay: f64,
    /// UE speed in m/s.
    pub v_ue: f64,
    pub seed: u64,
    pub num_realizations: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            fixed_delays: vec![0.0, 2.3e-6, 3.15e-6, 7.7e-6],
            pdp_time_constant: 10e-6,
            max_delay: 10e-6,
            v_ue: 190.0,
            seed: 0,
            num_realizations: 100,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self
            .fixed_delays
            .iter()
            .find(|&&d| !(d >= 0.0 && d <= self.max_delay))
        {
            return Err(Error::InvalidConfig(format!(
                "delay {d} outside [0, {}]",
                self.max_delay
            )));
        }
        if !(self.v_ue >= 0.0 && self.v_ue.is_finite()) {
            return Err(Error::InvalidConfig(format!("v_ue = {}", self.v_ue)));
        }
        if !(self.pdp_time_constant > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pdp_time_constant = {}",
                self.pdp_time_constant
            )));
        }
        Ok(())
    }

    /// Same scenario with delays and Dopplers kept at the same positions in
    /// bin units when moving from frame `from` to frame `to`.
    pub fn rescaled(&self, from: &OtfsConfig, to: &OtfsConfig) -> Self {
        let kt = to.delay_resolution() / from.delay_resolution();
        let kv = to.doppler_resolution() / from.doppler_resolution();
        Self {
            fixed_delays: self.fixed_delays.iter().map(|d| d * kt).collect(),
            pdp_time_constant: self.pdp_time_constant * kt,
            max_delay: self.max_delay * kt,
            v_ue: self.v_ue * kv * from.carrier_freq / to.carrier_freq,
            ..self.clone()
        }
    }

    /// The default scenario rescaled from the reference frame to `cfg`.
    pub fn scaled_for(cfg: &OtfsConfig) -> Self {
        Self::default().rescaled(&OtfsConfig::reference(), cfg)
    }

    /// `v_ue / c * f_c`.
    pub fn max_doppler(&self, cfg: &OtfsConfig) -> f64 {
        self.v_ue / SPEED_OF_LIGHT * cfg.carrier_freq
    }
}

/// A received, vectorized pilot frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub y: Vec<C64>,
    /// Noise variance per complex entry.
    pub sigma2: f64,
    pub psnr_db: f64,
}

impl Observation {
    pub fn new(cfg: &OtfsConfig, y: Vec<C64>, sigma2: f64) -> Result<Self> {
        if y.len() != cfg.frame_len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} samples", cfg.frame_len()),
                found: format!("{} samples", y.len()),
            });
        }
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma2 = {sigma2}")));
        }
        let psnr = cfg.pilot_energy / (cfg.frame_len() as f64 * sigma2);
        Ok(Self {
            y,
            sigma2,
            psnr_db: 10.0 * psnr.log10(),
        })
    }
}

/// Noise variance that yields pilot SNR `psnr_db`: `E_p / (M N 10^(psnr_db/10))`.
pub fn psnr_to_sigma2(cfg: &OtfsConfig, psnr_db: f64) -> f64 {
    cfg.pilot_energy / (cfg.frame_len() as f64 * 10f64.powf(psnr_db / 10.0))
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let scale = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

/// Draws one channel realization.
///
/// Per path, in order: gain `~ CN(0, p_i)` with `p_i ∝ exp(-τ_i/τ_decay)` and
/// `Σ p_i = 1`, then `θ_i ~ U[0, 2π)` and `ν_i = ν_max cos θ_i`.
pub fn draw_channel<R: Rng + ?Sized>(
    scen: &ScenarioConfig,
    cfg: &OtfsConfig,
    rng: &mut R,
) -> Result<PathSet> {
    scen.validate()?;
    cfg.validate()?;
    let nu_max = scen.max_doppler(cfg);
    let weights: Vec<f64> = scen
        .fixed_delays
        .iter()
        .map(|d| (-d / scen.pdp_time_constant).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut paths = Vec::with_capacity(weights.len());
    for (&tau, w) in scen.fixed_delays.iter().zip(&weights) {
        let gain = complex_gaussian(rng, w / total);
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        paths.push(Path {
            tau,
            nu: nu_max * theta.cos(),
            gain,
        });
    }
    let mut set = PathSet::new(paths);
    set.sort_by_delay();
    Ok(set)
}

/// Noiseless `Σ α_i r(τ_i, ν_i)`.
pub fn noiseless_observation(cfg: &OtfsConfig, channel: &PathSet) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); cfg.frame_len()];
    for p in &channel.paths {
        let col = cddpm_column_exact(cfg, p.tau, p.nu, ColumnStrategy::PilotSparse);
        for (o, v) in y.iter_mut().zip(&col.values) {
            *o += p.gain * *v;
        }
    }
    y
}

/// `y = Σ α_i r(τ_i, ν_i) + n`, `n ~ CN(0, σ² I)`.
pub fn simulate_observation<R: Rng + ?Sized>(
    cfg: &OtfsConfig,
    channel: &PathSet,
    sigma2: f64,
    rng: &mut R,
) -> Result<Observation> {
    if channel.is_empty() {
        return Err(Error::Empty("channel has no paths"));
    }
    channel.validate()?;
    let mut y = noiseless_observation(cfg, channel);
    for v in y.iter_mut() {
        *v += complex_gaussian(rng, sigma2);
    }
    Observation::new(cfg, y, sigma2)
}

/// Dense `H_dd = Σ α_i Υ(τ_i, ν_i)`.
pub fn assemble_channel_matrix(cfg: &OtfsConfig, channel: &PathSet) -> Result<DMatrix<C64>> {
    let len = cfg.frame_len();
    if len > MAX_DENSE_FRAME {
        return Err(Error::TooLarge {
            size: len,
            limit: MAX_DENSE_FRAME,
        });
    }
    let mut h = DMatrix::zeros(len, len);
    for p in &channel.paths {
        h += UpsilonKernel::new(cfg, p.tau, p.nu).matrix() * p.gain;
    }
    Ok(h)
}
