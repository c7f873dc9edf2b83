//! Surrogate CDDPM columns from a pair of networks predicting the TF image.

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array2;

use crate::config::OtfsConfig;
use crate::error::{Error, Result};
use crate::grid::C64;
use crate::kernel::CddpmColumn;
use crate::pipic::ColumnSource;
use crate::sfft::SymplecticFft;

use super::dataset::NormalizationSpec;
use super::mlp::Mlp;

/// One real-valued network of the pair.
pub type FnnModel = Mlp<f32>;

/// `sfft` of a predicted TF image, vectorized as a CDDPM column.
pub fn tf_to_column(
    fft: &SymplecticFft,
    real: impl IntoIterator<Item = f64>,
    imag: impl IntoIterator<Item = f64>,
    tau: f64,
    nu: f64,
) -> CddpmColumn {
    let mut values: Vec<C64> = real
        .into_iter()
        .zip(imag)
        .map(|(re, im)| C64::new(re, im))
        .collect();
    fft.sfft_vec(&mut values);
    CddpmColumn { values, tau, nu }
}

/// Networks for the real and imaginary parts plus the frame they were trained for.
#[derive(Debug)]
pub struct PredictorPair {
    pub fnn_real: FnnModel,
    pub fnn_imag: FnnModel,
    pub cfg: OtfsConfig,
    pub norm: NormalizationSpec,
    fft: SymplecticFft,
    out_of_domain: AtomicUsize,
}

impl Clone for PredictorPair {
    fn clone(&self) -> Self {
        Self {
            fnn_real: self.fnn_real.clone(),
            fnn_imag: self.fnn_imag.clone(),
            cfg: self.cfg.clone(),
            norm: self.norm,
            fft: SymplecticFft::new(self.cfg.m, self.cfg.n),
            out_of_domain: AtomicUsize::new(self.out_of_domain.load(Ordering::Relaxed)),
        }
    }
}

impl PredictorPair {
    pub fn new(fnn_real: FnnModel, fnn_imag: FnnModel, cfg: OtfsConfig, norm: NormalizationSpec) -> Result<Self> {
        cfg.validate()?;
        norm.validate()?;
        let dims = fnn_real.dims();
        if dims != fnn_imag.dims() {
            return Err(Error::DimensionMismatch {
                expected: format!("matching layer dimensions {dims:?}"),
                found: format!("{:?}", fnn_imag.dims()),
            });
        }
        if dims.len() != 4 || dims[0] != 2 || dims[3] != cfg.frame_len() {
            return Err(Error::DimensionMismatch {
                expected: format!("[2, L1, L2, {}]", cfg.frame_len()),
                found: format!("{dims:?}"),
            });
        }
        if !(fnn_real.all_finite() && fnn_imag.all_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameters".into()));
        }
        Ok(Self {
            fnn_real,
            fnn_imag,
            fft: SymplecticFft::new(cfg.m, cfg.n),
            cfg,
            norm,
            out_of_domain: AtomicUsize::new(0),
        })
    }

    /// Freshly initialized networks of shape `[2, l1, l2, MN]`.
    pub fn untrained<R: rand::Rng + ?Sized>(cfg: &OtfsConfig, l1: usize, l2: usize, rng: &mut R) -> Result<Self> {
        let dims = [2, l1, l2, cfg.frame_len()];
        let real = Mlp::init(&dims, rng)?;
        let imag = Mlp::init(&dims, rng)?;
        Self::new(real, imag, cfg.clone(), NormalizationSpec::for_config(cfg))
    }

    /// `(L1, L2)`.
    pub fn hidden_dims(&self) -> (usize, usize) {
        let d = self.fnn_real.dims();
        (d[1], d[2])
    }

    /// Number of predictions requested outside the normalized training box so far.
    pub fn out_of_domain_calls(&self) -> usize {
        self.out_of_domain.load(Ordering::Relaxed)
    }

    /// Rejects estimator frames the pair was not trained for.
    pub fn check_compatible(&self, cfg: &OtfsConfig) -> Result<()> {
        let same = self.cfg.m == cfg.m
            && self.cfg.n == cfg.n
            && self.cfg.pilot_delay == cfg.pilot_delay
            && self.cfg.pilot_doppler == cfg.pilot_doppler
            && self.cfg.pilot_energy == cfg.pilot_energy
            && self.cfg.delta_f == cfg.delta_f;
        if same {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: format!(
                    "{}x{} frame, Δf {}, pilot ({}, {}) with E_p {}",
                    self.cfg.m, self.cfg.n, self.cfg.delta_f, self.cfg.pilot_delay, self.cfg.pilot_doppler, self.cfg.pilot_energy
                ),
                found: format!(
                    "{}x{} frame, Δf {}, pilot ({}, {}) with E_p {}",
                    cfg.m, cfg.n, cfg.delta_f, cfg.pilot_delay, cfg.pilot_doppler, cfg.pilot_energy
                ),
            })
        }
    }

    fn inputs(&self, points: &[(f64, f64)]) -> Array2<f32> {
        let mut x = Array2::zeros((points.len(), 2));
        let mut outside = 0;
        for (i, &(tau, nu)) in points.iter().enumerate() {
            if !self.norm.in_domain(tau, nu) {
                outside += 1;
            }
            let (t, v) = self.norm.normalize(tau, nu);
            x[(i, 0)] = t as f32;
            x[(i, 1)] = v as f32;
        }
        if outside > 0 {
            self.out_of_domain.fetch_add(outside, Ordering::Relaxed);
        }
        x
    }

    /// Predicted columns for a batch of `(τ, ν)` points.
    pub fn predict_batch(&self, points: &[(f64, f64)]) -> Vec<CddpmColumn> {
        if points.is_empty() {
            return Vec::new();
        }
        let x = self.inputs(points);
        let re = self.fnn_real.forward_batch(x.view());
        let im = self.fnn_imag.forward_batch(x.view());
        points
            .iter()
            .enumerate()
            .map(|(i, &(tau, nu))| {
                tf_to_column(
                    &self.fft,
                    re.row(i).iter().map(|&v| v as f64),
                    im.row(i).iter().map(|&v| v as f64),
                    tau,
                    nu,
                )
            })
            .collect()
    }
}

/// Predicted column at one `(τ, ν)`: normalize, run both networks, combine, `sfft`.
pub fn predict_cddpm_column(pair: &PredictorPair, tau: f64, nu: f64) -> CddpmColumn {
    pair.predict_batch(&[(tau, nu)]).pop().expect("one prediction")
}

/// As a column source the surrogate only answers inside its training box.
/// Candidates outside get a zero column, which scores zero in every cost, so
/// search never lands on an extrapolated prediction. Such requests are still
/// counted by [`PredictorPair::out_of_domain_calls`].
impl ColumnSource for PredictorPair {
    fn column(&self, tau: f64, nu: f64) -> CddpmColumn {
        self.columns(&[(tau, nu)]).pop().expect("one column")
    }

    fn columns(&self, points: &[(f64, f64)]) -> Vec<CddpmColumn> {
        let inside: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|&(tau, nu)| self.norm.in_domain(tau, nu))
            .collect();
        let outside = points.len() - inside.len();
        if outside > 0 {
            self.out_of_domain.fetch_add(outside, Ordering::Relaxed);
        }
        let mut predicted = self.predict_batch(&inside).into_iter();
        let frame_len = self.cfg.frame_len();
        points
            .iter()
            .map(|&(tau, nu)| {
                if self.norm.in_domain(tau, nu) {
                    predicted.next().expect("one prediction per in-domain point")
                } else {
                    CddpmColumn { values: vec![C64::new(0.0, 0.0); frame_len], tau, nu }
                }
            })
            .collect()
    }

    fn frame(&self) -> (usize, usize) {
        (self.cfg.m, self.cfg.n)
    }
}

/// Outcome of the latency sizing rule for hidden widths `(L1, L2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencySizing {
    pub product: f64,
    /// `N³M⁴/2`.
    pub budget: f64,
    /// `L1 L2 < N³M⁴/2`.
    pub within_budget: bool,
    /// `L1, L2 > MN`, where the second hidden layer dominates the cost.
    pub wide_enough: bool,
}

impl LatencySizing {
    pub fn is_ok(&self) -> bool {
        self.within_budget && self.wide_enough
    }
}

pub fn validate_latency_sizing(cfg: &OtfsConfig, l1: usize, l2: usize) -> LatencySizing {
    let (m, n) = (cfg.m as f64, cfg.n as f64);
    let budget = n.powi(3) * m.powi(4) / 2.0;
    let product = l1 as f64 * l2 as f64;
    let mn = cfg.frame_len();
    LatencySizing {
        product,
        budget,
        within_budget: product < budget,
        wide_enough: l1 > mn && l2 > mn,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::substream;
    use crate::kernel::{cddpm_column_exact, ColumnStrategy};
    use crate::neural::dataset::tf_target;

    #[test]
    fn exact_targets_pass_through_unchanged() {
        let cfg = OtfsConfig::new(8, 8).with_pilot(2, 3, 2.0);
        let fft = SymplecticFft::new(8, 8);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        for &(a, b) in &[(0.0, 0.0), (1.3, -2.7), (5.92, 0.4)] {
            let target = tf_target(&cfg, &fft, a * dt, b * dn);
            let col = tf_to_column(&fft, target.iter().map(|v| v.re), target.iter().map(|v| v.im), a * dt, b * dn);
            let exact = cddpm_column_exact(&cfg, a * dt, b * dn, ColumnStrategy::PilotSparse);
            for (p, q) in col.values.iter().zip(&exact.values) {
                assert!((p - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn sizing_rule() {
        let cfg = OtfsConfig::reference();
        let a = validate_latency_sizing(&cfg, 2048, 2048);
        assert!(a.is_ok());
        assert_eq!(a.budget, 16f64.powi(7) / 2.0);
        assert!(validate_latency_sizing(&cfg, 4096, 16384).is_ok());
        // L1 L2 equal to the budget exactly
        assert_eq!(8192.0 * 16384.0, a.budget);
        assert!(!validate_latency_sizing(&cfg, 8192, 16384).within_budget);
        assert!(validate_latency_sizing(&cfg, 8191, 16384).within_budget);
        assert!(!validate_latency_sizing(&cfg, 100, 4096).wide_enough);
    }

    #[test]
    fn predictions_are_deterministic_and_batched() {
        let cfg = OtfsConfig::new(4, 4);
        let pair = PredictorPair::untrained(&cfg, 24, 24, &mut substream(0, 0)).unwrap();
        let pts = [(1e-6, 300.0), (3e-6, -2000.0), (50e-6, 0.0)];
        let batch = pair.predict_batch(&pts);
        for (p, col) in pts.iter().zip(&batch) {
            let single = predict_cddpm_column(&pair, p.0, p.1);
            assert_eq!(single.values.len(), 16);
            for (a, b) in single.values.iter().zip(&col.values) {
                assert!((a - b).norm() < 1e-6);
            }
            assert_eq!(single, predict_cddpm_column(&pair, p.0, p.1));
        }
        assert!(pair.out_of_domain_calls() >= 2);
    }

    #[test]
    fn finite_over_input_box() {
        let cfg = OtfsConfig::new(4, 4);
        let pair = PredictorPair::untrained(&cfg, 16, 16, &mut substream(2, 0)).unwrap();
        for i in 0..=10 {
            for j in 0..=10 {
                let tau = pair.norm.tau_scale * i as f64 / 10.0;
                let nu = pair.norm.nu_scale * (j as f64 / 5.0 - 1.0);
                assert!(pair.column(tau, nu).values.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
            }
        }
        assert_eq!(pair.out_of_domain_calls(), 0);
    }

    #[test]
    fn column_source_zeroes_out_of_domain_candidates() {
        let cfg = OtfsConfig::new(4, 4);
        let pair = PredictorPair::untrained(&cfg, 16, 16, &mut substream(5, 0)).unwrap();
        let t = pair.norm.tau_scale;
        let v = pair.norm.nu_scale;
        let pts = [(0.5 * t, 0.0), (1.5 * t, 0.0), (0.2 * t, -1.2 * v), (t, v)];
        let cols = pair.columns(&pts);
        assert_eq!(cols[0], predict_cddpm_column(&pair, pts[0].0, pts[0].1));
        assert_eq!(cols[3], predict_cddpm_column(&pair, pts[3].0, pts[3].1));
        for c in &cols[1..3] {
            assert_eq!(c.norm_sqr(), 0.0);
            assert_eq!(c.values.len(), 16);
        }
        assert_eq!((cols[1].tau, cols[2].nu), (pts[1].0, pts[2].1));
        assert_eq!(pair.out_of_domain_calls(), 2);
    }

    #[test]
    fn rejects_inconsistent_networks() {
        let cfg = OtfsConfig::new(4, 4);
        let norm = NormalizationSpec::for_config(&cfg);
        let a = Mlp::zeros(&[2, 8, 8, 16]).unwrap();
        let b = Mlp::zeros(&[2, 8, 9, 16]).unwrap();
        assert!(PredictorPair::new(a.clone(), b, cfg.clone(), norm).is_err());
        let wrong = Mlp::zeros(&[2, 8, 8, 15]).unwrap();
        assert!(PredictorPair::new(wrong.clone(), wrong, cfg.clone(), norm).is_err());
        let deep = Mlp::zeros(&[2, 8, 8, 8, 16]).unwrap();
        assert!(PredictorPair::new(deep.clone(), deep, cfg.clone(), norm).is_err());
        let pair = PredictorPair::new(a.clone(), a, cfg.clone(), norm).unwrap();
        assert!(pair.check_compatible(&cfg).is_ok());
        assert!(pair.check_compatible(&OtfsConfig::new(8, 8)).is_err());
        assert!(pair.check_compatible(&cfg.clone().with_pilot(1, 0, 1.0)).is_err());
    }
}
