//! Neural surrogate for CDDPM columns.
//!
//! Two networks of shape `[2, L1, L2, MN]` map a normalized `(τ, ν)` pair to
//! the real and imaginary parts of the time-frequency image `isfft(r(τ, ν))`.
//! A predicted column is recovered with `sfft`.

pub mod dataset;
pub mod io;
pub mod mlp;
pub mod predictor;
pub mod train;

pub use dataset::{generate_dataset, Dataset, NormalizationSpec};
pub use io::{load_model, load_model_for, save_model};
pub use mlp::{Layer, Mlp};
pub use predictor::{
    predict_cddpm_column, validate_latency_sizing, FnnModel, LatencySizing, PredictorPair,
};
pub use train::{train, TrainConfig, TrainReport};

use crate::channel::substream;
use crate::config::OtfsConfig;
use crate::error::Result;

/// Outcome of [`train_predictor`].
#[derive(Debug)]
pub struct TrainedPredictor {
    pub pair: PredictorPair,
    pub report_real: TrainReport,
    pub report_imag: TrainReport,
}

/// Generates a dataset and trains both networks of an `[2, l1, l2, MN]` pair.
///
/// Random streams derive from `tc.seed`: data, the two initializations, and
/// the two shuffling sequences are independent substreams.
pub fn train_predictor(cfg: &OtfsConfig, l1: usize, l2: usize, tc: &TrainConfig) -> Result<TrainedPredictor> {
    let norm = NormalizationSpec::for_config(cfg);
    let data = generate_dataset(cfg, &norm, tc.num_samples, &mut substream(tc.seed, 0))?;
    train_predictor_on(cfg, &data, l1, l2, tc)
}

/// As [`train_predictor`], on an existing dataset.
pub fn train_predictor_on(
    cfg: &OtfsConfig,
    data: &Dataset,
    l1: usize,
    l2: usize,
    tc: &TrainConfig,
) -> Result<TrainedPredictor> {
    let dims = [2, l1, l2, cfg.frame_len()];
    let init = |stream| -> Result<FnnModel> {
        let mut rng = substream(tc.seed, stream);
        let mut net = Mlp::init(&dims, &mut rng)?;
        net.spread_hinges(&[0.0, -1.0], &[1.0, 1.0], &mut rng)?;
        Ok(net)
    };
    let mut real = init(1)?;
    let mut imag = init(2)?;
    let report_real = train(
        &mut real,
        data.inputs.view(),
        data.target_real.view(),
        &TrainConfig { seed: tc.seed.wrapping_add(1), ..tc.clone() },
    )?;
    let report_imag = train(
        &mut imag,
        data.inputs.view(),
        data.target_imag.view(),
        &TrainConfig { seed: tc.seed.wrapping_add(2), ..tc.clone() },
    )?;
    let pair = PredictorPair::new(real, imag, cfg.clone(), NormalizationSpec::for_config(cfg))?;
    Ok(TrainedPredictor { pair, report_real, report_imag })
}
