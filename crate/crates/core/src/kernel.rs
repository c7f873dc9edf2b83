//! The delay-Doppler kernel `Υ(τ, ν)` of a single propagation path and the
//! CDDPM columns derived from it.
//!
//! Entry `(k'M + l', k''M + l'')` of `Υ` is
//!
//! ```text
//! Υ = e^{-j2πτν}/(MN) Σ_n Σ_m f_{k'',l'}(m) e^{j2π(m/M (l' - l'' - Mτ/T) - n/N (k' - k'' - Nν/Δf))}
//!
//! f_{k'',l'}(m) = Σ_{s=-m}^{M-1-m} e^{j2π s l'/M} [ (1 - τ/T) e^{jπ(1 + τ/T)(ν/Δf - s)} sinc((1 - τ/T)(ν/Δf - s))
//!                                           + (τ/T) e^{-j2πk''/N} e^{jπ(τ/T)(ν/Δf - s)} sinc(τ(ν - sΔf)) ]
//! ```
//!
//! with the normalized `sinc(x) = sin(πx)/(πx)`. Row and column indices are
//! Doppler-major, matching the vectorization of [`crate::grid::Grid`].
//!
//! Two evaluation routes exist. [`UpsilonKernel::entry`] evaluates the
//! double sum literally, recomputing `f` for every `(n, m)` term, which is the
//! `O(N³M⁴)` brute force when used to fill the whole matrix.
//! [`UpsilonKernel::column`] uses the fact that `f` does not depend on `n`
//! and that the `s` range only depends on `m` through its bounds: the `n`-sum
//! and `m`-sum separate, and the `m`-sum is folded into prefix sums, giving a
//! column in `O(M² + N²)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::config::OtfsConfig;
use crate::error::{Error, Result};
use crate::grid::{build_pilot_frame, C64};

/// Normalized sinc, `sin(πx)/(πx)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

/// Per-path tables for evaluating `Υ(τ, ν)`.
///
/// Everything that depends only on `(τ, ν)` and a single summation index is
/// tabulated once; entries and columns are then assembled from the tables.
#[derive(Clone, Debug)]
pub struct UpsilonKernel {
    m: usize,
    n: usize,
    tau: f64,
    nu: f64,
    prefactor: C64,
    /// First bracket term, indexed by `s + M - 1`.
    direct: Vec<C64>,
    /// Second bracket term without the `e^{-j2πk''/N}` factor, indexed by `s + M - 1`.
    wrapped: Vec<C64>,
    /// `e^{-j2π m (Mτ/T) / M}` for `m in 0..M`.
    delay_phase: Vec<C64>,
    /// `e^{j2π n (Nν/Δf) / N}` for `n in 0..N`.
    doppler_phase: Vec<C64>,
    /// `e^{j2π q/M}` for `q in 0..M`.
    twiddle_m: Vec<C64>,
    /// `e^{j2π q/N}` for `q in 0..N`.
    twiddle_n: Vec<C64>,
}

impl UpsilonKernel {
    pub fn new(cfg: &OtfsConfig, tau: f64, nu: f64) -> Self {
        let (m, n) = (cfg.m, cfg.n);
        let t = cfg.slot_duration;
        let df = cfg.delta_f;
        let x = tau / t;
        let u = nu / df;
        let delay_bins = m as f64 * tau / t;
        let doppler_bins = n as f64 * nu / df;

        let span = 2 * m - 1;
        let mut direct = Vec::with_capacity(span);
        let mut wrapped = Vec::with_capacity(span);
        for idx in 0..span {
            let s = idx as f64 - (m as f64 - 1.0);
            let d = u - s;
            direct.push(cis(PI * (1.0 + x) * d) * ((1.0 - x) * sinc((1.0 - x) * d)));
            wrapped.push(cis(PI * x * d) * (x * sinc(tau * (nu - s * df))));
        }

        let delay_phase = (0..m)
            .map(|mm| cis(-2.0 * PI * mm as f64 * delay_bins / m as f64))
            .collect();
        let doppler_phase = (0..n)
            .map(|nn| cis(2.0 * PI * nn as f64 * doppler_bins / n as f64))
            .collect();
        let twiddle_m = (0..m).map(|q| cis(2.0 * PI * q as f64 / m as f64)).collect();
        let twiddle_n = (0..n).map(|q| cis(2.0 * PI * q as f64 / n as f64)).collect();

        Self {
            m,
            n,
            tau,
            nu,
            prefactor: cis(-2.0 * PI * tau * nu) / (m * n) as f64,
            direct,
            wrapped,
            delay_phase,
            doppler_phase,
            twiddle_m,
            twiddle_n,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn tw_m(&self, q: isize) -> C64 {
        self.twiddle_m[q.rem_euclid(self.m as isize) as usize]
    }

    fn tw_n(&self, q: isize) -> C64 {
        self.twiddle_n[q.rem_euclid(self.n as isize) as usize]
    }

    /// Bracketed summand of `f_{k'',l'}` for shift `s`, without the `e^{j2πsl'/M}` factor.
    fn bracket(&self, s: isize, k2: usize) -> C64 {
        let idx = (s + self.m as isize - 1) as usize;
        self.direct[idx] + self.tw_n(-(k2 as isize)) * self.wrapped[idx]
    }

    fn check_indices(&self, k1: usize, l1: usize, k2: usize, l2: usize) -> Result<()> {
        if k1 >= self.n || k2 >= self.n || l1 >= self.m || l2 >= self.m {
            return Err(Error::IndexOutOfRange(format!(
                "(k'={k1}, l'={l1}, k''={k2}, l''={l2}) for M={}, N={}",
                self.m, self.n
            )));
        }
        Ok(())
    }

    /// Entry `(k1 M + l1, k2 M + l2)` by the literal double sum.
    pub fn entry(&self, k1: usize, l1: usize, k2: usize, l2: usize) -> Result<C64> {
        self.check_indices(k1, l1, k2, l2)?;
        Ok(self.entry_unchecked(k1, l1, k2, l2))
    }

    fn entry_unchecked(&self, k1: usize, l1: usize, k2: usize, l2: usize) -> C64 {
        let (m_len, n_len) = (self.m as isize, self.n as isize);
        let (k1, l1, k2, l2) = (k1 as isize, l1 as isize, k2 as isize, l2 as isize);
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..n_len {
            let doppler = self.tw_n(-n * (k1 - k2)) * self.doppler_phase[n as usize];
            for m in 0..m_len {
                let mut f = C64::new(0.0, 0.0);
                for s in -m..=(m_len - 1 - m) {
                    f += self.tw_m(s * l1) * self.bracket(s, k2 as usize);
                }
                let delay = self.tw_m(m * (l1 - l2)) * self.delay_phase[m as usize];
                acc += f * delay * doppler;
            }
        }
        self.prefactor * acc
    }

    /// Column `k2 M + l2` of `Υ`, by the separated sums.
    pub fn column(&self, k2: usize, l2: usize) -> Result<Vec<C64>> {
        self.check_indices(0, 0, k2, l2)?;
        let mut out = vec![C64::new(0.0, 0.0); self.m * self.n];
        self.column_into(k2, l2, &mut out);
        Ok(out)
    }

    pub(crate) fn column_into(&self, k2: usize, l2: usize, out: &mut [C64]) {
        let (m_len, n_len) = (self.m, self.n);
        debug_assert_eq!(out.len(), m_len * n_len);
        let bracket: Vec<C64> = (-(m_len as isize - 1)..m_len as isize)
            .map(|s| self.bracket(s, k2))
            .collect();

        let mut delay_sums = vec![C64::new(0.0, 0.0); m_len];
        let mut prefix = vec![C64::new(0.0, 0.0); m_len + 1];
        for (l1, slot) in delay_sums.iter_mut().enumerate() {
            for m in 0..m_len {
                let h = self.tw_m((m as isize) * (l1 as isize - l2 as isize)) * self.delay_phase[m];
                prefix[m + 1] = prefix[m] + h;
            }
            let mut acc = C64::new(0.0, 0.0);
            for (idx, g) in bracket.iter().enumerate() {
                let s = idx as isize - (m_len as isize - 1);
                // m ranges over max(0, -s) ..= min(M-1, M-1-s)
                let lo = (-s).max(0) as usize;
                let hi = (m_len as isize - 1 - s).min(m_len as isize - 1) as usize;
                acc += self.tw_m(s * l1 as isize) * *g * (prefix[hi + 1] - prefix[lo]);
            }
            *slot = acc;
        }

        for k1 in 0..n_len {
            let mut doppler = C64::new(0.0, 0.0);
            for n in 0..n_len {
                doppler += self.tw_n(-(n as isize) * (k1 as isize - k2 as isize))
                    * self.doppler_phase[n];
            }
            let scaled = self.prefactor * doppler;
            for (l1, a) in delay_sums.iter().enumerate() {
                out[k1 * m_len + l1] = scaled * *a;
            }
        }
    }

    /// All of `Υ` via the separated sums.
    pub fn matrix(&self) -> DMatrix<C64> {
        let len = self.m * self.n;
        let mut mat = DMatrix::zeros(len, len);
        let mut col = vec![C64::new(0.0, 0.0); len];
        for k2 in 0..self.n {
            for l2 in 0..self.m {
                self.column_into(k2, l2, &mut col);
                mat.column_mut(k2 * self.m + l2).copy_from_slice(&col);
            }
        }
        mat
    }

    /// All of `Υ` via the literal double sum of every entry.
    pub fn brute_force_matrix(&self) -> DMatrix<C64> {
        let len = self.m * self.n;
        DMatrix::from_fn(len, len, |row, col| {
            let (k1, l1) = (row / self.m, row % self.m);
            let (k2, l2) = (col / self.m, col % self.m);
            self.entry_unchecked(k1, l1, k2, l2)
        })
    }
}

/// One entry of `Υ(τ, ν)` by the literal double sum.
pub fn upsilon_entry(
    cfg: &OtfsConfig,
    tau: f64,
    nu: f64,
    k1: usize,
    l1: usize,
    k2: usize,
    l2: usize,
) -> Result<C64> {
    if !(tau >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!("(tau, nu) = ({tau}, {nu})")));
    }
    UpsilonKernel::new(cfg, tau, nu).entry(k1, l1, k2, l2)
}

/// How [`cddpm_column_exact`] evaluates `Υ(τ, ν) vec(X)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnStrategy {
    /// Materialize every entry of `Υ` by brute force and multiply by `vec(X)`.
    Full,
    /// `vec(X)` is a scaled impulse: return `sqrt(E_p)` times the pilot column of `Υ`.
    PilotSparse,
}

/// Received pilot response `r(τ, ν)` of a single unit-gain path.
#[derive(Clone, Debug, PartialEq)]
pub struct CddpmColumn {
    pub values: Vec<C64>,
    pub tau: f64,
    pub nu: f64,
}

impl CddpmColumn {
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The CDDPM matrix `R`: one column per hypothesized path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cddpm {
    pub columns: Vec<CddpmColumn>,
}

impl Cddpm {
    pub fn new(columns: Vec<CddpmColumn>) -> Self {
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, CddpmColumn::len)
    }

    /// `R a`.
    pub fn combine(&self, gains: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows()];
        for (col, g) in self.columns.iter().zip(gains) {
            for (o, v) in out.iter_mut().zip(&col.values) {
                *o += *g * *v;
            }
        }
        out
    }
}

/// `r(τ, ν) = Υ(τ, ν) vec(X)` for the pilot frame of `cfg`.
pub fn cddpm_column_exact(
    cfg: &OtfsConfig,
    tau: f64,
    nu: f64,
    strategy: ColumnStrategy,
) -> CddpmColumn {
    let kernel = UpsilonKernel::new(cfg, tau, nu);
    let values = match strategy {
        ColumnStrategy::Full => {
            let upsilon = kernel.brute_force_matrix();
            let pilot = build_pilot_frame(cfg).expect("valid OTFS configuration");
            let x = DVector::from_column_slice(pilot.as_vec());
            (upsilon * x).as_slice().to_vec()
        }
        ColumnStrategy::PilotSparse => {
            let mut values = vec![C64::new(0.0, 0.0); cfg.frame_len()];
            kernel.column_into(cfg.pilot_doppler, cfg.pilot_delay, &mut values);
            let amp = cfg.pilot_energy.sqrt();
            values.iter_mut().for_each(|v| *v *= amp);
            values
        }
    };
    CddpmColumn { values, tau, nu }
}
