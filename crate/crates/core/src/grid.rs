//! Complex M x N frames in the delay-Doppler and time-frequency domains.
//!
//! Storage is column-major so that the backing vector *is* the vectorized
//! frame: `vec(X)[n * M + m] = X[m, n]`.

use std::marker::PhantomData;

use num_complex::Complex64;

use crate::config::OtfsConfig;
use crate::error::{Error, Result};

pub type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayDoppler;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeFrequency;

/// Row index is delay (or subcarrier) `m`, column index is Doppler (or slot) `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<D> {
    m: usize,
    n: usize,
    data: Vec<C64>,
    _domain: PhantomData<D>,
}

pub type DdGrid = Grid<DelayDoppler>;
pub type TfGrid = Grid<TimeFrequency>;

impl<D> Grid<D> {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            data: vec![C64::new(0.0, 0.0); m * n],
            _domain: PhantomData,
        }
    }

    /// Inverse vectorization: reshape a length `m * n` vector into a frame.
    pub fn from_vec(m: usize, n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries ({m}x{n})", m * n),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self {
            m,
            n,
            data,
            _domain: PhantomData,
        })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.data[n * self.m + m]
    }

    pub fn set(&mut self, m: usize, n: usize, value: C64) {
        self.data[n * self.m + m] = value;
    }

    /// Vectorized view, columns stacked.
    pub fn as_vec(&self) -> &[C64] {
        &self.data
    }

    pub fn as_vec_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub(crate) fn retag<E>(self) -> Grid<E> {
        Grid {
            m: self.m,
            n: self.n,
            data: self.data,
            _domain: PhantomData,
        }
    }
}

/// Pilot-only delay-Doppler frame: `sqrt(E_p)` at the pilot cell, zero elsewhere.
pub fn build_pilot_frame(cfg: &OtfsConfig) -> Result<DdGrid> {
    cfg.validate()?;
    let mut grid = DdGrid::zeros(cfg.m, cfg.n);
    grid.set(
        cfg.pilot_delay,
        cfg.pilot_doppler,
        C64::new(cfg.pilot_energy.sqrt(), 0.0),
    );
    Ok(grid)
}
