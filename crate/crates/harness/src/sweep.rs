//! NMSE and path-count sweeps over pilot SNR.

use std::io::Write;
use std::path::Path;

use otfs_ce::channel::{draw_channel, psnr_to_sigma2, simulate_observation, substream};
use otfs_ce::dl_pipic::dl_estimate;
use otfs_ce::neural::{load_model_for, PredictorPair};
use otfs_ce::pipic::{estimate, EstimateState, ExactColumns};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::metrics::{avg_paths, nmse_paths, to_db};
use crate::plot::{line_plot_svg, Series};

/// Substream ids per realization: one for the channel, one per PSNR point for noise.
const STREAMS_PER_REALIZATION: u64 = 1024;

/// Aggregate for one `(method, psnr)` cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub method: &'static str,
    pub psnr_db: f64,
    /// `10 log10` of the mean linear NMSE over successful realizations.
    pub nmse_db: f64,
    pub avg_paths: f64,
    pub n_realizations: usize,
    pub n_failures: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Estimator calls made, including failed ones.
    pub invocations: usize,
    /// Largest exact-column evaluation count of any single estimate.
    pub max_exact_evaluations: usize,
}

impl SweepResult {
    pub fn series(&self, method: Method) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.method == method.name()).collect()
    }
}

#[derive(Clone, Debug)]
struct Outcome {
    nmse: f64,
    paths: usize,
    exact_evaluations: usize,
}

/// Worker count from `OTFS_CE_WORKERS`, if set.
pub fn configured_workers() -> Option<usize> {
    std::env::var("OTFS_CE_WORKERS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0)
}

/// Runs `f` on a pool sized by `OTFS_CE_WORKERS`, or on the global pool.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match configured_workers() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        None => f(),
    }
}

fn run_method(
    method: Method,
    exp: &ExperimentConfig,
    model: Option<&PredictorPair>,
    obs: &otfs_ce::channel::Observation,
) -> otfs_ce::Result<EstimateState> {
    match method {
        Method::Pipic => estimate(obs, &exp.otfs, &exp.estimator, &ExactColumns::new(&exp.otfs)),
        Method::DlPipic => dl_estimate(
            obs,
            &exp.otfs,
            &exp.estimator,
            model.expect("model checked before the sweep"),
        ),
    }
}

fn run_realization(
    exp: &ExperimentConfig,
    model: Option<&PredictorPair>,
    r: usize,
) -> Result<Vec<Vec<std::result::Result<Outcome, String>>>> {
    let base = r as u64 * STREAMS_PER_REALIZATION;
    let channel = draw_channel(&exp.scenario, &exp.otfs, &mut substream(exp.scenario.seed, base))?;
    let mut per_psnr = Vec::with_capacity(exp.psnr_grid_db.len());
    for (p, &psnr) in exp.psnr_grid_db.iter().enumerate() {
        let mut rng = substream(exp.scenario.seed, base + 1 + p as u64);
        let obs = simulate_observation(&exp.otfs, &channel, psnr_to_sigma2(&exp.otfs, psnr), &mut rng)?;
        let per_method = exp
            .methods
            .iter()
            .map(|&method| {
                let state = run_method(method, exp, model, &obs).map_err(|e| e.to_string())?;
                let nmse = nmse_paths(&exp.otfs, &channel, &state.detected).map_err(|e| e.to_string())?;
                Ok(Outcome {
                    nmse,
                    paths: state.num_paths(),
                    exact_evaluations: state.exact_evaluations,
                })
            })
            .collect();
        per_psnr.push(per_method);
    }
    Ok(per_psnr)
}

/// Draws `scenario.num_realizations` channels and runs every selected method at
/// every PSNR point. A realization keeps its channel across PSNR points; noise
/// streams are independent per point.
pub fn run_sweep(exp: &ExperimentConfig, model: Option<&PredictorPair>) -> Result<SweepResult> {
    exp.validate_with(model.is_some())?;
    if exp.psnr_grid_db.len() as u64 >= STREAMS_PER_REALIZATION {
        return Err(HarnessError::Config(format!(
            "at most {} PSNR points",
            STREAMS_PER_REALIZATION - 1
        )));
    }
    let loaded;
    let model = match (exp.uses(Method::DlPipic), model) {
        (true, Some(m)) => {
            m.check_compatible(&exp.otfs)?;
            Some(m)
        }
        (true, None) => {
            let path = exp.model_path.as_ref().expect("validated without an in-memory model");
            loaded = load_model_for(path, &exp.otfs)?;
            Some(&loaded)
        }
        (false, _) => None,
    };

    let n_real = exp.scenario.num_realizations;
    let outcomes: Vec<_> = with_workers(|| {
        (0..n_real)
            .into_par_iter()
            .map(|r| run_realization(exp, model, r))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut result = SweepResult::default();
    for (mi, &method) in exp.methods.iter().enumerate() {
        for (p, &psnr) in exp.psnr_grid_db.iter().enumerate() {
            let mut nmse_sum = 0.0;
            let mut paths = Vec::new();
            let mut failures = 0;
            for (r, per_psnr) in outcomes.iter().enumerate() {
                result.invocations += 1;
                match &per_psnr[p][mi] {
                    Ok(o) => {
                        nmse_sum += o.nmse;
                        paths.push(o.paths);
                        result.max_exact_evaluations = result.max_exact_evaluations.max(o.exact_evaluations);
                    }
                    Err(e) => {
                        log::warn!("{} at {psnr} dB, realization {r}: {e}", method.name());
                        failures += 1;
                    }
                }
            }
            let ok = paths.len();
            result.points.push(SweepPoint {
                method: method.name(),
                psnr_db: psnr,
                nmse_db: if ok > 0 { to_db(nmse_sum / ok as f64) } else { f64::NAN },
                avg_paths: avg_paths(&paths).unwrap_or(f64::NAN),
                n_realizations: ok,
                n_failures: failures,
            });
        }
    }
    Ok(result)
}

pub fn write_sweep_csv<W: Write>(w: W, result: &SweepResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in &result.points {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `sweep.csv`, `nmse.svg` and `paths.svg` into `dir`.
pub fn write_sweep_outputs(dir: &Path, result: &SweepResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_sweep_csv(std::fs::File::create(dir.join("sweep.csv"))?, result)?;
    let mut methods: Vec<&str> = result.points.iter().map(|p| p.method).collect();
    methods.dedup();
    let series = |f: fn(&SweepPoint) -> f64| -> Vec<Series> {
        methods
            .iter()
            .map(|m| Series {
                label: m.to_string(),
                points: result.points.iter().filter(|p| p.method == *m).map(|p| (p.psnr_db, f(p))).collect(),
            })
            .collect()
    };
    std::fs::write(
        dir.join("nmse.svg"),
        line_plot_svg("NMSE vs pilot SNR", "PSNR [dB]", "NMSE [dB]", &series(|p| p.nmse_db)),
    )?;
    std::fs::write(
        dir.join("paths.svg"),
        line_plot_svg("Detected paths vs pilot SNR", "PSNR [dB]", "average paths", &series(|p| p.avg_paths)),
    )?;
    Ok(())
}
