//! Per-call latency of exact and surrogate column evaluation.

use std::io::Write;
use std::time::Instant;

use otfs_ce::kernel::{cddpm_column_exact, ColumnStrategy};
use otfs_ce::neural::{predict_cddpm_column, NormalizationSpec, PredictorPair};
use otfs_ce::OtfsConfig;
use rand::Rng;
use serde::Serialize;

use crate::config::LatencyConfig;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyRecord {
    pub strategy: String,
    pub l1: Option<usize>,
    pub l2: Option<usize>,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub n_calls: usize,
}

impl LatencyRecord {
    fn from_samples(strategy: &str, dims: Option<(usize, usize)>, mut us: Vec<f64>) -> Result<Self> {
        if us.is_empty() {
            return Err(HarnessError::Empty("no timed calls"));
        }
        us.sort_by(f64::total_cmp);
        let pick = |q: f64| us[((q * us.len() as f64).ceil() as usize).clamp(1, us.len()) - 1];
        Ok(Self {
            strategy: strategy.to_string(),
            l1: dims.map(|d| d.0),
            l2: dims.map(|d| d.1),
            mean_us: us.iter().sum::<f64>() / us.len() as f64,
            p50_us: pick(0.5),
            p95_us: pick(0.95),
            n_calls: us.len(),
        })
    }
}

/// Random fractional pairs over the surrogate's normalization box.
pub fn random_pairs<R: Rng + ?Sized>(cfg: &OtfsConfig, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let norm = NormalizationSpec::for_config(cfg);
    (0..n)
        .map(|_| {
            (
                rng.random::<f64>() * norm.tau_scale,
                (2.0 * rng.random::<f64>() - 1.0) * norm.nu_scale,
            )
        })
        .collect()
}

fn time_calls(pairs: &[(f64, f64)], warmup: usize, mut call: impl FnMut(f64, f64)) -> Vec<f64> {
    for &(t, v) in pairs.iter().cycle().take(warmup) {
        call(t, v);
    }
    pairs
        .iter()
        .map(|&(t, v)| {
            let start = Instant::now();
            call(t, v);
            start.elapsed().as_secs_f64() * 1e6
        })
        .collect()
}

/// Times the brute-force and pilot-sparse exact columns and each predictor on
/// the same pair list. The brute-force strategy runs on the first
/// `full_pairs` pairs only when that is set.
pub fn latency_bench(
    cfg: &OtfsConfig,
    models: &[&PredictorPair],
    pairs: &[(f64, f64)],
    opts: &LatencyConfig,
) -> Result<Vec<LatencyRecord>> {
    cfg.validate()?;
    for m in models {
        m.check_compatible(cfg)?;
    }
    let full_n = opts.full_pairs.unwrap_or(pairs.len()).min(pairs.len());
    let mut records = Vec::new();
    let full_warmup = opts.warmup.min(1);
    records.push(LatencyRecord::from_samples(
        "full",
        None,
        time_calls(&pairs[..full_n], full_warmup, |t, v| {
            std::hint::black_box(cddpm_column_exact(cfg, t, v, ColumnStrategy::Full));
        }),
    )?);
    records.push(LatencyRecord::from_samples(
        "pilot-sparse",
        None,
        time_calls(pairs, opts.warmup, |t, v| {
            std::hint::black_box(cddpm_column_exact(cfg, t, v, ColumnStrategy::PilotSparse));
        }),
    )?);
    for m in models {
        records.push(LatencyRecord::from_samples(
            "fnn",
            Some(m.hidden_dims()),
            time_calls(pairs, opts.warmup, |t, v| {
                std::hint::black_box(predict_cddpm_column(m, t, v));
            }),
        )?);
    }
    Ok(records)
}

/// Mean-latency ratio `slow / fast`.
pub fn speedup(slow: &LatencyRecord, fast: &LatencyRecord) -> f64 {
    slow.mean_us / fast.mean_us
}

pub fn write_latency_csv<W: Write>(w: W, records: &[LatencyRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
