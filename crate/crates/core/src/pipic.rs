//! Progressive interpath interference cancellation (P-IPIC).
//!
//! The estimator runs in two phases over a received pilot frame `y`:
//!
//! 1. **Search.** Paths are detected one at a time by maximizing the
//!    residue-based cost `|rᴴe|²/‖r‖²`, first over the integer delay-Doppler
//!    grid and then over progressively narrower fractional grids centered on
//!    the previous estimate. Each detected path gets an exact CDDPM column,
//!    gains are re-fitted by regularized least squares over every detected
//!    column, and the residue is updated. The phase stops once the residue
//!    norm drops below `3 sqrt(MN σ²)` or `P_max` paths are found.
//! 2. **Refinement.** Every detected path is re-estimated in detection order
//!    by maximizing the observation-based cost `yᴴR(RᴴR + λI)⁻¹Rᴴy`, where `R`
//!    holds all current columns with the refined one swapped for the
//!    candidate. After refining path `i`, the residue of the first `i`
//!    refined paths is checked against the same threshold; when it already
//!    passes, the remaining paths are discarded as false alarms.
//!
//! Candidate columns inside both maximizations come from a [`ColumnSource`].
//! With [`ExactColumns`] this is the model-based estimator; the
//! surrogate-driven variant in [`crate::dl_pipic`] plugs a neural predictor
//! into the same code path. Columns of *detected* paths are always exact.

use serde::{Deserialize, Serialize};

use crate::channel::{Observation, Path, PathSet};
use crate::config::OtfsConfig;
use crate::error::{Error, Result};
use crate::grid::C64;
use crate::kernel::{cddpm_column_exact, Cddpm, CddpmColumn, ColumnStrategy};
use crate::linalg::{self, inner, norm_sqr};

/// Search region of the coarse stage during refinement.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineCoarse {
    /// The 3 x 3 block of integer bins around the current estimate.
    #[default]
    Neighborhood,
    /// The whole integer grid, as in the search phase.
    FullGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Maximum number of detectable paths.
    pub p_max: usize,
    /// Maximum number of fine-search iterations.
    pub s_max: usize,
    /// Fine-search delay tolerance in s.
    pub eps_tau: f64,
    /// Fine-search Doppler tolerance in Hz.
    pub eps_nu: f64,
    /// Fine-grid span and contraction factor along delay.
    pub m_tau: usize,
    /// Fine-grid span and contraction factor along Doppler.
    pub n_nu: usize,
    /// Regularizer of the least-squares gain fit.
    pub lambda: f64,
    /// Residue-norm stopping threshold. `None` derives `3 sqrt(MN σ²)` from the observation.
    pub eps_stop: Option<f64>,
    pub refine_coarse: RefineCoarse,
    /// Clamp fine and neighborhood candidates into [`frame_box`]. Parameters
    /// outside alias ones inside on the pilot column but not on the channel matrix.
    pub clamp_to_frame: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            p_max: 15,
            s_max: 10,
            eps_tau: 1e-10,
            eps_nu: 1e-2,
            m_tau: 10,
            n_nu: 10,
            lambda: 1e-5,
            eps_stop: None,
            refine_coarse: RefineCoarse::Neighborhood,
            clamp_to_frame: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.p_max < 1 {
            return bad("p_max must be at least 1".into());
        }
        if self.s_max < 1 {
            return bad("s_max must be at least 1".into());
        }
        if self.m_tau < 2 || self.n_nu < 2 {
            return bad(format!("m_tau = {}, n_nu = {} (need >= 2)", self.m_tau, self.n_nu));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda = {}", self.lambda));
        }
        if !(self.eps_tau > 0.0 && self.eps_nu > 0.0) {
            return bad(format!("eps_tau = {}, eps_nu = {}", self.eps_tau, self.eps_nu));
        }
        if let Some(eps) = self.eps_stop {
            if !(eps >= 0.0) {
                return bad(format!("eps_stop = {eps}"));
            }
        }
        Ok(())
    }

    pub fn stop_threshold(&self, cfg: &OtfsConfig, sigma2: f64) -> f64 {
        self.eps_stop
            .unwrap_or_else(|| 3.0 * (cfg.frame_len() as f64 * sigma2).sqrt())
    }

    /// Number of points on each side of the center of a fine grid, per axis.
    pub fn fine_half_spans(&self) -> (usize, usize) {
        (self.m_tau / 2, self.n_nu / 2)
    }

    /// Spacings `(Δτ / m_τ^(s-1), Δν / n_ν^(s-1))` of fine iteration `s >= 1`.
    pub fn fine_spacing(&self, cfg: &OtfsConfig, s: usize) -> (f64, f64) {
        let exp = (s - 1) as i32;
        (
            cfg.delay_resolution() / (self.m_tau as f64).powi(exp),
            cfg.doppler_resolution() / (self.n_nu as f64).powi(exp),
        )
    }
}

/// Provider of candidate CDDPM columns for the cost maximizations.
pub trait ColumnSource: Sync {
    fn column(&self, tau: f64, nu: f64) -> CddpmColumn;

    /// Columns for a batch of `(τ, ν)` points, in order.
    fn columns(&self, points: &[(f64, f64)]) -> Vec<CddpmColumn> {
        points.iter().map(|&(t, v)| self.column(t, v)).collect()
    }

    /// Frame geometry the produced columns belong to.
    fn frame(&self) -> (usize, usize);
}

/// Exact columns, the model-based estimator's source.
#[derive(Clone, Debug)]
pub struct ExactColumns {
    cfg: OtfsConfig,
    strategy: ColumnStrategy,
}

impl ExactColumns {
    pub fn new(cfg: &OtfsConfig) -> Self {
        Self::with_strategy(cfg, ColumnStrategy::PilotSparse)
    }

    pub fn with_strategy(cfg: &OtfsConfig, strategy: ColumnStrategy) -> Self {
        Self {
            cfg: cfg.clone(),
            strategy,
        }
    }
}

impl ColumnSource for ExactColumns {
    fn column(&self, tau: f64, nu: f64) -> CddpmColumn {
        cddpm_column_exact(&self.cfg, tau, nu, self.strategy)
    }

    fn frame(&self) -> (usize, usize) {
        (self.cfg.m, self.cfg.n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateState {
    /// Detected paths with their fitted gains.
    pub detected: PathSet,
    /// Fitted gains, parallel to `detected.paths` and `columns`.
    pub gains: Vec<C64>,
    /// `y - R gains`.
    pub residue: Vec<C64>,
    pub residue_norm: f64,
    /// Exact columns of the detected paths.
    pub columns: Cddpm,
    /// Residue norm before the first and after every search iteration.
    pub search_residue_norms: Vec<f64>,
    /// Paths found by the search phase, before refinement.
    pub searched_paths: usize,
    /// Exact column evaluations performed for detected and refined paths.
    pub exact_evaluations: usize,
}

impl EstimateState {
    fn from_parts(
        y: &[C64],
        columns: Cddpm,
        gains: Vec<C64>,
        search_residue_norms: Vec<f64>,
        searched_paths: usize,
        exact_evaluations: usize,
    ) -> Self {
        let residue = linalg::residue(&columns, &gains, y);
        let detected = PathSet::new(
            columns
                .columns
                .iter()
                .zip(&gains)
                .map(|(c, g)| Path {
                    tau: c.tau,
                    nu: c.nu,
                    gain: *g,
                })
                .collect(),
        );
        Self {
            detected,
            gains,
            residue_norm: norm_sqr(&residue).sqrt(),
            residue,
            columns,
            search_residue_norms,
            searched_paths,
            exact_evaluations,
        }
    }

    pub fn num_paths(&self) -> usize {
        self.detected.len()
    }
}

/// Integer delay-Doppler grid: delays `0..M`, Dopplers `-⌊N/2⌋..⌈N/2⌉`,
/// delay-major so the first maximum in iteration order is the tie-break.
pub fn coarse_grid(cfg: &OtfsConfig) -> Vec<(f64, f64)> {
    let dt = cfg.delay_resolution();
    let dn = cfg.doppler_resolution();
    let lo = -((cfg.n / 2) as i64);
    let hi = cfg.n.div_ceil(2) as i64;
    let mut points = Vec::with_capacity(cfg.m * cfg.n);
    for k in 0..cfg.m {
        for q in lo..hi {
            points.push((k as f64 * dt, q as f64 * dn));
        }
    }
    points
}

/// `{W_τ Γ + τ̂} x {W_ν Λ + ν̂}` with negative delays clamped to zero.
pub fn fine_grid(center: (f64, f64), spacing: (f64, f64), half_spans: (usize, usize)) -> Vec<(f64, f64)> {
    let (ht, hn) = (half_spans.0 as i64, half_spans.1 as i64);
    let mut points = Vec::with_capacity(((2 * ht + 1) * (2 * hn + 1)) as usize);
    for g in -ht..=ht {
        let tau = (center.0 + g as f64 * spacing.0).max(0.0);
        for l in -hn..=hn {
            points.push((tau, center.1 + l as f64 * spacing.1));
        }
    }
    points
}

/// Closed unambiguous region `[0, T] x [-Δf/2, Δf/2]` as `((τ_lo, τ_hi), (ν_lo, ν_hi))`.
pub fn frame_box(cfg: &OtfsConfig) -> ((f64, f64), (f64, f64)) {
    let t = cfg.m as f64 * cfg.delay_resolution();
    let half = cfg.n as f64 * cfg.doppler_resolution() / 2.0;
    ((0.0, t), (-half, half))
}

fn clamp_points(cfg: &OtfsConfig, est: &EstimatorConfig, points: &mut [(f64, f64)]) {
    if !est.clamp_to_frame {
        return;
    }
    let ((t0, t1), (v0, v1)) = frame_box(cfg);
    for p in points {
        *p = (p.0.clamp(t0, t1), p.1.clamp(v0, v1));
    }
}

fn neighborhood_grid(cfg: &OtfsConfig, center: (f64, f64)) -> Vec<(f64, f64)> {
    let dt = cfg.delay_resolution();
    let dn = cfg.doppler_resolution();
    let kt = (center.0 / dt).round() as i64;
    let kn = (center.1 / dn).round() as i64;
    let mut points = Vec::with_capacity(9);
    for a in kt - 1..=kt + 1 {
        if a < 0 {
            continue;
        }
        for b in kn - 1..=kn + 1 {
            points.push((a as f64 * dt, b as f64 * dn));
        }
    }
    points
}

/// Columns with `‖r‖ < 1e-6 sqrt(E_p)` carry no usable direction.
fn is_degenerate(cfg: &OtfsConfig, column: &CddpmColumn) -> bool {
    column.norm_sqr() < 1e-12 * cfg.pilot_energy
}

fn guarded_residue_cost(cfg: &OtfsConfig, column: &CddpmColumn, residue: &[C64]) -> f64 {
    if is_degenerate(cfg, column) {
        return 0.0;
    }
    inner(&column.values, residue).norm_sqr() / column.norm_sqr()
}

/// First maximizer of `score` over `points`; non-finite scores never win.
fn best_point<S, F>(source: &S, points: &[(f64, f64)], mut score: F) -> Result<(f64, f64)>
where
    S: ColumnSource + ?Sized,
    F: FnMut(&CddpmColumn) -> Result<f64>,
{
    let columns = source.columns(points);
    let mut best: Option<(f64, usize)> = None;
    for (i, col) in columns.iter().enumerate() {
        let value = score(col)?;
        if !value.is_finite() {
            continue;
        }
        if best.is_none_or(|(b, _)| value > b) {
            best = Some((value, i));
        }
    }
    best.map(|(_, i)| points[i])
        .ok_or_else(|| Error::InvalidArgument("no finite cost on the search grid".into()))
}

/// Fine iterations `s = 1..=s_max` around `start`.
fn fine_iterations<S, F>(
    start: (f64, f64),
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    source: &S,
    mut score: F,
) -> Result<(f64, f64)>
where
    S: ColumnSource + ?Sized,
    F: FnMut(&CddpmColumn) -> Result<f64>,
{
    let mut center = start;
    for s in 1..=est.s_max {
        let spacing = est.fine_spacing(cfg, s);
        let mut grid = fine_grid(center, spacing, est.fine_half_spans());
        clamp_points(cfg, est, &mut grid);
        center = best_point(source, &grid, &mut score)?;
        if spacing.0 < est.eps_tau && spacing.1 < est.eps_nu {
            break;
        }
    }
    Ok(center)
}

fn check_source<S: ColumnSource + ?Sized>(cfg: &OtfsConfig, source: &S) -> Result<()> {
    if source.frame() != (cfg.m, cfg.n) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} column source", cfg.m, cfg.n),
            found: format!("{}x{}", source.frame().0, source.frame().1),
        });
    }
    Ok(())
}

fn check_residue(cfg: &OtfsConfig, residue: &[C64]) -> Result<()> {
    if residue.len() != cfg.frame_len() {
        return Err(Error::DimensionMismatch {
            expected: format!("length {}", cfg.frame_len()),
            found: format!("length {}", residue.len()),
        });
    }
    if norm_sqr(residue) == 0.0 {
        return Err(Error::InvalidArgument("residue is identically zero".into()));
    }
    Ok(())
}

/// Maximizer of the residue-based cost over the integer grid.
pub fn coarse_search<S: ColumnSource + ?Sized>(
    residue: &[C64],
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    source: &S,
) -> Result<(f64, f64)> {
    let _ = est;
    check_source(cfg, source)?;
    check_residue(cfg, residue)?;
    best_point(source, &coarse_grid(cfg), |c| Ok(guarded_residue_cost(cfg, c, residue)))
}

/// Iterative fractional refinement of a coarse estimate under the residue-based cost.
pub fn fine_search<S: ColumnSource + ?Sized>(
    coarse: (f64, f64),
    residue: &[C64],
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    source: &S,
) -> Result<(f64, f64)> {
    est.validate()?;
    check_source(cfg, source)?;
    check_residue(cfg, residue)?;
    fine_iterations(coarse, cfg, est, source, |c| {
        Ok(guarded_residue_cost(cfg, c, residue))
    })
}

fn exact_column(cfg: &OtfsConfig, point: (f64, f64), counter: &mut usize) -> CddpmColumn {
    *counter += 1;
    cddpm_column_exact(cfg, point.0, point.1, ColumnStrategy::PilotSparse)
}

/// Search phase: detect up to `P_max` paths by residue-cost maximization.
pub fn search_phase<S: ColumnSource + ?Sized>(
    obs: &Observation,
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    source: &S,
) -> Result<EstimateState> {
    cfg.validate()?;
    est.validate()?;
    check_source(cfg, source)?;
    let y = &obs.y;
    if y.len() != cfg.frame_len() {
        return Err(Error::DimensionMismatch {
            expected: format!("length {}", cfg.frame_len()),
            found: format!("length {}", y.len()),
        });
    }
    let eps = est.stop_threshold(cfg, obs.sigma2);

    let mut columns = Cddpm::default();
    let mut gains = Vec::new();
    let mut residue = y.clone();
    let mut norms = vec![norm_sqr(y).sqrt()];
    let mut exact_evaluations = 0;

    for _ in 0..est.p_max {
        if norm_sqr(&residue) == 0.0 {
            break;
        }
        let coarse = coarse_search(&residue, cfg, est, source)?;
        let point = fine_search(coarse, &residue, cfg, est, source)?;
        columns.columns.push(exact_column(cfg, point, &mut exact_evaluations));
        gains = linalg::rls_gains(&columns, y, est.lambda)?;
        residue = linalg::residue(&columns, &gains, y);
        let norm = norm_sqr(&residue).sqrt();
        norms.push(norm);
        if norm < eps {
            break;
        }
    }

    let searched = columns.len();
    Ok(EstimateState::from_parts(
        y,
        columns,
        gains,
        norms,
        searched,
        exact_evaluations,
    ))
}

/// Observation-based cost with all columns but one fixed.
struct SwapCost<'a> {
    fixed: Vec<&'a CddpmColumn>,
    /// Gram matrix of the fixed columns, regularized.
    gram: Vec<Vec<C64>>,
    rhs: Vec<C64>,
    y: &'a [C64],
    lambda: f64,
}

impl<'a> SwapCost<'a> {
    fn new(fixed: Vec<&'a CddpmColumn>, y: &'a [C64], lambda: f64) -> Self {
        let gram = fixed
            .iter()
            .enumerate()
            .map(|(i, a)| {
                fixed
                    .iter()
                    .enumerate()
                    .map(|(j, b)| {
                        let v = inner(&a.values, &b.values);
                        if i == j {
                            v + lambda
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let rhs = fixed.iter().map(|c| inner(&c.values, y)).collect();
        Self {
            fixed,
            gram,
            rhs,
            y,
            lambda,
        }
    }

    fn cost(&self, candidate: &CddpmColumn) -> Result<f64> {
        let q = self.fixed.len();
        let cross: Vec<C64> = self
            .fixed
            .iter()
            .map(|c| inner(&c.values, &candidate.values))
            .collect();
        let gram = nalgebra::DMatrix::from_fn(q + 1, q + 1, |i, j| match (i < q, j < q) {
            (true, true) => self.gram[i][j],
            (true, false) => cross[i],
            (false, true) => cross[j].conj(),
            (false, false) => C64::new(candidate.norm_sqr() + self.lambda, 0.0),
        });
        let rhs = nalgebra::DVector::from_fn(q + 1, |i, _| {
            if i < q {
                self.rhs[i]
            } else {
                inner(&candidate.values, self.y)
            }
        });
        linalg::quadratic_form(&linalg::factor(gram)?, &rhs)
    }
}

/// Refinement phase: re-estimate each detected path under the observation-based cost.
pub fn refinement_phase<S: ColumnSource + ?Sized>(
    state: EstimateState,
    obs: &Observation,
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    source: &S,
) -> Result<EstimateState> {
    est.validate()?;
    check_source(cfg, source)?;
    let y = &obs.y;
    let eps = est.stop_threshold(cfg, obs.sigma2);
    let EstimateState {
        columns,
        search_residue_norms,
        searched_paths,
        mut exact_evaluations,
        gains: search_gains,
        ..
    } = state;
    let mut cols = columns.columns;
    let total = cols.len();
    if total == 0 {
        return Ok(EstimateState::from_parts(
            y,
            Cddpm::default(),
            Vec::new(),
            search_residue_norms,
            searched_paths,
            exact_evaluations,
        ));
    }

    let mut gains = search_gains;
    for i_ref in 0..total {
        let current = (cols[i_ref].tau, cols[i_ref].nu);
        let point = {
            let fixed: Vec<&CddpmColumn> = cols
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i_ref)
                .map(|(_, c)| c)
                .collect();
            let swap = SwapCost::new(fixed, y, est.lambda);
            let score = |c: &CddpmColumn| {
                if is_degenerate(cfg, c) {
                    Ok(0.0)
                } else {
                    match swap.cost(c) {
                        // candidate collinear with a fixed column adds nothing
                        Err(Error::SolverFailure(_)) => Ok(0.0),
                        other => other,
                    }
                }
            };
            let initial = match est.refine_coarse {
                RefineCoarse::Neighborhood => {
                    let mut grid = neighborhood_grid(cfg, current);
                    clamp_points(cfg, est, &mut grid);
                    grid
                }
                RefineCoarse::FullGrid => coarse_grid(cfg),
            };
            let coarse = best_point(source, &initial, score)?;
            fine_iterations(coarse, cfg, est, source, score)?
        };
        cols[i_ref] = exact_column(cfg, point, &mut exact_evaluations);

        let refined = Cddpm::new(cols[..=i_ref].to_vec());
        gains = linalg::rls_gains(&refined, y, est.lambda)?;
        let norm = norm_sqr(&linalg::residue(&refined, &gains, y)).sqrt();
        if norm < eps && i_ref + 1 < total {
            log::debug!(
                "refinement met threshold after {} of {total} paths; dropping the rest",
                i_ref + 1
            );
            cols.truncate(i_ref + 1);
            break;
        }
    }

    Ok(EstimateState::from_parts(
        y,
        Cddpm::new(cols),
        gains,
        search_residue_norms,
        searched_paths,
        exact_evaluations,
    ))
}

/// Full estimator: search phase followed by refinement.
pub fn estimate<S: ColumnSource + ?Sized>(
    obs: &Observation,
    cfg: &OtfsConfig,
    est: &EstimatorConfig,
    source: &S,
) -> Result<EstimateState> {
    let searched = search_phase(obs, cfg, est, source)?;
    refinement_phase(searched, obs, cfg, est, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{noiseless_observation, psnr_to_sigma2, simulate_observation, substream};

    fn obs_from(cfg: &OtfsConfig, y: Vec<C64>, sigma2: f64) -> Observation {
        Observation::new(cfg, y, sigma2).unwrap()
    }

    #[test]
    fn coarse_grid_layout() {
        let cfg = OtfsConfig::new(4, 5);
        let g = coarse_grid(&cfg);
        assert_eq!(g.len(), 20);
        let dn = cfg.doppler_resolution();
        assert_eq!(g[0], (0.0, -2.0 * dn));
        assert_eq!(g[4], (0.0, 2.0 * dn));
        assert_eq!(g[5].0, cfg.delay_resolution());

        let even = coarse_grid(&OtfsConfig::new(4, 4));
        assert_eq!(even[0].1, -2.0 * OtfsConfig::new(4, 4).doppler_resolution());
        assert_eq!(even[3].1, 1.0 * OtfsConfig::new(4, 4).doppler_resolution());
    }

    #[test]
    fn fine_grid_size_and_first_spacing() {
        let est = EstimatorConfig::default();
        let cfg = OtfsConfig::reference();
        assert_eq!(fine_grid((1e-5, 0.0), (1e-7, 1.0), est.fine_half_spans()).len(), 121);
        let (wt, wn) = est.fine_spacing(&cfg, 1);
        assert_eq!(wt, cfg.delay_resolution());
        assert_eq!(wn, cfg.doppler_resolution());
        let (wt, wn) = est.fine_spacing(&cfg, 3);
        assert!((wt - 2.5e-8).abs() < 1e-20);
        assert!((wn - 15.625).abs() < 1e-12);
    }

    #[test]
    fn fine_grid_clamps_negative_delays() {
        let g = fine_grid((1e-6, 0.0), (1e-6, 1.0), (5, 5));
        assert!(g.iter().all(|p| p.0 >= 0.0));
        assert_eq!(g[0].0, 0.0);
    }

    #[test]
    fn fine_search_stays_in_frame_box() {
        let cfg = OtfsConfig::new(8, 8);
        let source = ExactColumns::new(&cfg);
        let ((t0, t1), (v0, v1)) = frame_box(&cfg);
        assert_eq!((t0, v0 + v1), (0.0, 0.0));
        assert!((t1 - cfg.slot_duration).abs() < 1e-18 && (v1 - cfg.delta_f / 2.0).abs() < 1e-9);
        // a path just inside the far corner pulls the search toward the boundary
        let truth = (0.99 * t1, 0.98 * v1);
        let y = source.column(truth.0, truth.1).values;
        let start = (7.0 * cfg.delay_resolution(), 3.0 * cfg.doppler_resolution());
        let est = EstimatorConfig::default();
        let found = fine_search(start, &y, &cfg, &est, &source).unwrap();
        assert!(found.0 <= t1 && found.1 <= v1 && found.0 >= t0 && found.1 >= v0);
        let mut grid = fine_grid(start, est.fine_spacing(&cfg, 1), est.fine_half_spans());
        clamp_points(&cfg, &est, &mut grid);
        assert!(grid.iter().all(|p| (t0..=t1).contains(&p.0) && (v0..=v1).contains(&p.1)));
        let loose = EstimatorConfig { clamp_to_frame: false, ..est };
        let mut grid = fine_grid(start, loose.fine_spacing(&cfg, 1), loose.fine_half_spans());
        clamp_points(&cfg, &loose, &mut grid);
        assert!(grid.iter().any(|p| p.0 > t1));
    }

    #[test]
    fn coarse_search_finds_grid_path() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        let truth = (2.0 * dt, 3.0 * dn);
        let y = source.column(truth.0, truth.1).values;
        assert_eq!(coarse_search(&y, &cfg, &est, &source).unwrap(), truth);

        // brute-force argmax of the matched filter over the grid agrees
        let brute = coarse_grid(&cfg)
            .into_iter()
            .map(|p| (p, linalg::residue_cost(&source.column(p.0, p.1), &y).unwrap()))
            .fold((truth, -1.0), |acc, (p, v)| if v > acc.1 { (p, v) } else { acc });
        assert_eq!(brute.0, truth);

        let y0 = source.column(0.0, 0.0).values;
        assert_eq!(coarse_search(&y0, &cfg, &est, &source).unwrap(), (0.0, 0.0));
    }

    struct Flat(usize);

    impl ColumnSource for Flat {
        fn column(&self, tau: f64, nu: f64) -> CddpmColumn {
            CddpmColumn { values: vec![C64::new(1.0, 0.0); self.0 * self.0], tau, nu }
        }
        fn frame(&self) -> (usize, usize) {
            (self.0, self.0)
        }
    }

    #[test]
    fn coarse_search_tie_breaks_low_indices() {
        let cfg = OtfsConfig::new(4, 4);
        let y = vec![C64::new(1.0, 0.0); 16];
        let p = coarse_search(&y, &cfg, &EstimatorConfig::default(), &Flat(4)).unwrap();
        assert_eq!(p, (0.0, -2.0 * cfg.doppler_resolution()));
    }

    #[test]
    fn coarse_search_rejects_zero_residue_and_wrong_source() {
        let cfg = OtfsConfig::new(4, 4);
        let est = EstimatorConfig::default();
        assert!(coarse_search(&vec![C64::default(); 16], &cfg, &est, &Flat(4)).is_err());
        assert!(coarse_search(&vec![C64::new(1.0, 0.0); 16], &cfg, &est, &Flat(5)).is_err());
    }

    #[test]
    fn fine_search_recovers_fractional_delay() {
        let cfg = OtfsConfig::reference();
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        let truth = (0.92 * dt, 2.0 * dn);
        let y = source.column(truth.0, truth.1).values;
        let coarse = coarse_search(&y, &cfg, &est, &source).unwrap();
        let fine = fine_search(coarse, &y, &cfg, &est, &source).unwrap();
        // stops at s = 7; the final grid spacing along delay is Δτ / 10^6
        let (final_wt, _) = est.fine_spacing(&cfg, 7);
        assert!((fine.0 - truth.0).abs() <= final_wt, "{} vs {}", fine.0, truth.0);
        assert!((fine.1 - truth.1).abs() <= est.fine_spacing(&cfg, 7).1);
    }

    #[test]
    fn fine_search_stays_within_spans() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig { s_max: 3, ..Default::default() };
        let source = ExactColumns::new(&cfg);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        let y = source.column(3.0 * dt, 1.0 * dn).values;
        let start = (3.0 * dt, 1.0 * dn);
        let end = fine_search(start, &y, &cfg, &est, &source).unwrap();
        let (ht, hn) = est.fine_half_spans();
        let reach_t: f64 = (1..=3).map(|s| ht as f64 * est.fine_spacing(&cfg, s).0).sum();
        let reach_n: f64 = (1..=3).map(|s| hn as f64 * est.fine_spacing(&cfg, s).1).sum();
        assert!((end.0 - start.0).abs() <= reach_t);
        assert!((end.1 - start.1).abs() <= reach_n);
        assert_eq!(end, start);
    }

    #[test]
    fn single_grid_path_exact_recovery() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        let truth = Path { tau: 3.0 * dt, nu: -2.0 * dn, gain: C64::new(1.0, 0.0) };
        let y = noiseless_observation(&cfg, &PathSet::new(vec![truth]));
        let obs = obs_from(&cfg, y, 1e-12);
        let out = estimate(&obs, &cfg, &est, &source).unwrap();
        assert_eq!(out.num_paths(), 1);
        assert_eq!(out.searched_paths, 1);
        let p = out.detected.paths[0];
        assert_eq!((p.tau, p.nu), (truth.tau, truth.nu));
        assert!((p.gain - truth.gain).norm() < 1e-4);
        assert!(out.residue_norm < 1e-4);
    }

    #[test]
    fn pure_noise_below_threshold_stops_after_one_iteration() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let sigma2 = psnr_to_sigma2(&cfg, 20.0);
        let mut rng = substream(8, 0);
        let y: Vec<C64> = (0..64)
            .map(|_| crate::channel::complex_gaussian(&mut rng, sigma2))
            .collect();
        let obs = obs_from(&cfg, y, sigma2);
        let eps = est.stop_threshold(&cfg, sigma2);
        assert!(norm_sqr(&obs.y).sqrt() < eps);
        let out = estimate(&obs, &cfg, &est, &source).unwrap();
        assert!(out.searched_paths <= 1);
        assert!(out.num_paths() <= 1);
        assert!(out.residue_norm < eps);
        for g in &out.gains {
            assert!(g.norm() < 3.0 * sigma2.sqrt(), "{g}");
        }
    }

    #[test]
    fn residue_norm_non_increasing_without_regularization() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig { lambda: 0.0, p_max: 6, ..Default::default() };
        let source = ExactColumns::new(&cfg);
        let scen = crate::channel::ScenarioConfig::default();
        for seed in 0..3 {
            let mut rng = substream(seed, 1);
            let ch = crate::channel::draw_channel(&scen, &cfg, &mut rng).unwrap();
            let sigma2 = psnr_to_sigma2(&cfg, 40.0);
            let obs = simulate_observation(&cfg, &ch, sigma2, &mut rng).unwrap();
            let st = search_phase(&obs, &cfg, &est, &source).unwrap();
            for w in st.search_residue_norms.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", st.search_residue_norms);
            }
        }
    }

    #[test]
    fn refinement_keeps_exact_estimate() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        let truth = Path { tau: 1.0 * dt, nu: 2.0 * dn, gain: C64::new(0.0, 1.0) };
        let obs = obs_from(&cfg, noiseless_observation(&cfg, &PathSet::new(vec![truth])), 1e-12);
        let searched = search_phase(&obs, &cfg, &est, &source).unwrap();
        let refined = refinement_phase(searched.clone(), &obs, &cfg, &est, &source).unwrap();
        assert_eq!(refined.num_paths(), 1);
        assert_eq!(refined.detected.paths[0].tau, searched.detected.paths[0].tau);
        assert_eq!(refined.detected.paths[0].nu, searched.detected.paths[0].nu);
    }

    #[test]
    fn refinement_drops_spurious_path() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let (dt, dn) = (cfg.delay_resolution(), cfg.doppler_resolution());
        let paths = vec![
            Path { tau: 0.4 * dt, nu: 0.7 * dn, gain: C64::new(0.8, 0.1) },
            Path { tau: 2.6 * dt, nu: -1.3 * dn, gain: C64::new(-0.3, 0.5) },
        ];
        let sigma2 = psnr_to_sigma2(&cfg, 30.0);
        let obs = obs_from(&cfg, noiseless_observation(&cfg, &PathSet::new(paths.clone())), sigma2);

        let mut cols: Vec<CddpmColumn> = paths.iter().map(|p| source.column(p.tau, p.nu)).collect();
        cols.push(source.column(5.0 * dt, 3.0 * dn));
        let columns = Cddpm::new(cols);
        let gains = vec![paths[0].gain, paths[1].gain, C64::new(1e-9, 0.0)];
        let injected = EstimateState::from_parts(&obs.y, columns, gains, vec![], 3, 3);

        let refined = refinement_phase(injected, &obs, &cfg, &est, &source).unwrap();
        assert_eq!(refined.num_paths(), 2);
        assert_eq!(refined.exact_evaluations, 5);
        for (got, want) in refined.detected.paths.iter().zip(&paths) {
            assert!((got.tau - want.tau).abs() < 1e-3 * dt);
            assert!((got.nu - want.nu).abs() < 1e-3 * dn);
        }
    }

    #[test]
    fn estimate_is_deterministic() {
        let cfg = OtfsConfig::new(8, 8);
        let est = EstimatorConfig::default();
        let source = ExactColumns::new(&cfg);
        let scen = crate::channel::ScenarioConfig::default();
        let mut rng = substream(4, 2);
        let ch = crate::channel::draw_channel(&scen, &cfg, &mut rng).unwrap();
        let obs = simulate_observation(&cfg, &ch, psnr_to_sigma2(&cfg, 25.0), &mut rng).unwrap();
        let a = estimate(&obs, &cfg, &est, &source).unwrap();
        let b = estimate(&obs, &cfg, &est, &source).unwrap();
        assert_eq!(a, b);
        assert!(a.num_paths() <= a.searched_paths);
        assert!(a.searched_paths <= est.p_max);
        assert!(a.detected.paths.iter().all(|p| p.tau >= 0.0));
        assert!(a.exact_evaluations <= 2 * est.p_max);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        assert!(EstimatorConfig { p_max: 0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { m_tau: 1, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { lambda: 0.0, ..Default::default() }.validate().is_ok());
        let cfg = OtfsConfig::reference();
        let eps = EstimatorConfig::default().stop_threshold(&cfg, 1e-4);
        assert!((eps - 3.0 * (256.0f64 * 1e-4).sqrt()).abs() < 1e-15);
        let fixed = EstimatorConfig { eps_stop: Some(0.5), ..Default::default() };
        assert_eq!(fixed.stop_threshold(&cfg, 1e-4), 0.5);
    }
}
