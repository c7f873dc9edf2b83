//! P-IPIC driven by surrogate columns.
//!
//! Every candidate column inside the coarse, fine and refinement maximizations
//! comes from the neural predictor. Columns of detected paths are still exact,
//! so at most `2 P_max` exact evaluations happen per estimate (one per
//! detection, one per refinement).

use crate::channel::Observation;
use crate::config::OtfsConfig;
use crate::error::Result;
use crate::kernel::CddpmColumn;
use crate::neural::PredictorPair;
use crate::pipic::{estimate, ColumnSource, EstimateState, EstimatorConfig, ExactColumns};

/// Stand-in for a predictor that returns exact columns, bypassing the networks.
#[derive(Clone, Debug)]
pub struct ExactOracle {
    inner: ExactColumns,
}

impl ExactOracle {
    pub fn new(cfg: &OtfsConfig) -> Self {
        Self {
            inner: ExactColumns::new(cfg),
        }
    }
}

impl ColumnSource for ExactOracle {
    fn column(&self, tau: f64, nu: f64) -> CddpmColumn {
        self.inner.column(tau, nu)
    }

    fn frame(&self) -> (usize, usize) {
        self.inner.frame()
    }
}

pub fn dl_estimate(
    obs: &Observation,
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    pair: &PredictorPair,
) -> Result<EstimateState> {
    pair.check_compatible(cfg)?;
    estimate(obs, cfg, est, pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use crate::channel::{draw_channel, psnr_to_sigma2, simulate_observation, substream, ScenarioConfig};

    struct Counting<S> {
        inner: S,
        calls: AtomicUsize,
    }

    impl<S: ColumnSource> ColumnSource for Counting<S> {
        fn column(&self, tau: f64, nu: f64) -> CddpmColumn {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.column(tau, nu)
        }

        fn columns(&self, points: &[(f64, f64)]) -> Vec<CddpmColumn> {
            self.calls.fetch_add(points.len(), Ordering::Relaxed);
            self.inner.columns(points)
        }

        fn frame(&self) -> (usize, usize) {
            self.inner.frame()
        }
    }

    #[test]
    fn oracle_matches_model_based_estimate() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let scen = ScenarioConfig::default();
        for seed in 0..3 {
            let mut rng = substream(seed, 0);
            let ch = draw_channel(&scen, &cfg, &mut rng).unwrap();
            let obs = simulate_observation(&cfg, &ch, psnr_to_sigma2(&cfg, 28.0), &mut rng).unwrap();
            let a = estimate(&obs, &cfg, &est, &ExactColumns::new(&cfg)).unwrap();
            let b = estimate(&obs, &cfg, &est, &ExactOracle::new(&cfg)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn surrogate_handles_argmax_and_exact_calls_stay_bounded() {
        let cfg = OtfsConfig::new(4, 4);
        let est = EstimatorConfig { p_max: 4, ..Default::default() };
        let pair = PredictorPair::untrained(&cfg, 20, 20, &mut substream(1, 1)).unwrap();
        let source = Counting { inner: pair, calls: AtomicUsize::new(0) };
        let scen = ScenarioConfig::default();
        let mut rng = substream(2, 0);
        let ch = draw_channel(&scen, &cfg, &mut rng).unwrap();
        let obs = simulate_observation(&cfg, &ch, psnr_to_sigma2(&cfg, 30.0), &mut rng).unwrap();
        let out = estimate(&obs, &cfg, &est, &source).unwrap();
        assert!(out.exact_evaluations <= 2 * est.p_max);
        assert!(out.exact_evaluations >= out.searched_paths);
        assert!(out.exact_evaluations <= 2 * out.searched_paths);
        assert!(source.calls.load(Ordering::Relaxed) > 100 * out.searched_paths);
    }

    #[test]
    fn rejects_foreign_model() {
        let cfg = OtfsConfig::new(4, 4);
        let pair = PredictorPair::untrained(&OtfsConfig::new(8, 8), 70, 70, &mut substream(0, 0)).unwrap();
        let obs = Observation::new(&cfg, vec![Default::default(); 16], 1.0).unwrap();
        assert!(dl_estimate(&obs, &cfg, &EstimatorConfig::default(), &pair).is_err());
    }
}
