//! Symplectic finite Fourier transforms between the delay-Doppler and
//! time-frequency domains.
//!
//! `isfft(X) = F_M X F_N^H` and `sfft(Y) = F_M^H Y F_N`, where `F_K` is the
//! unitary K-point DFT matrix `{e^{-j2π mq/K} / sqrt(K)}`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::grid::{DdGrid, TfGrid, C64};

/// Planned transforms for one `M x N` geometry. Cheap to share across threads.
#[derive(Clone)]
pub struct SymplecticFft {
    m: usize,
    n: usize,
    forward_m: Arc<dyn Fft<f64>>,
    inverse_m: Arc<dyn Fft<f64>>,
    forward_n: Arc<dyn Fft<f64>>,
    inverse_n: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SymplecticFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymplecticFft")
            .field("m", &self.m)
            .field("n", &self.n)
            .finish()
    }
}

impl SymplecticFft {
    pub fn new(m: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            n,
            forward_m: planner.plan_fft_forward(m),
            inverse_m: planner.plan_fft_inverse(m),
            forward_n: planner.plan_fft_forward(n),
            inverse_n: planner.plan_fft_inverse(n),
        }
    }

    /// Applies `along_m` to every column and `along_n` to every row, in place.
    fn apply(&self, data: &mut [C64], along_m: &dyn Fft<f64>, along_n: &dyn Fft<f64>) {
        let (m, n) = (self.m, self.n);
        assert_eq!(data.len(), m * n, "grid does not match {m}x{n} transform");
        along_m.process(data);
        let mut row = vec![C64::new(0.0, 0.0); n];
        for mm in 0..m {
            for (nn, slot) in row.iter_mut().enumerate() {
                *slot = data[nn * m + mm];
            }
            along_n.process(&mut row);
            for (nn, v) in row.iter().enumerate() {
                data[nn * m + mm] = *v;
            }
        }
        let scale = 1.0 / ((m * n) as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn isfft(&self, grid: DdGrid) -> TfGrid {
        let mut out: TfGrid = grid.retag();
        self.apply(out.as_vec_mut(), &*self.forward_m, &*self.inverse_n);
        out
    }

    pub fn sfft(&self, grid: TfGrid) -> DdGrid {
        let mut out: DdGrid = grid.retag();
        self.apply(out.as_vec_mut(), &*self.inverse_m, &*self.forward_n);
        out
    }

    /// [`Self::sfft`] on a raw vectorized frame, in place.
    pub fn sfft_vec(&self, data: &mut [C64]) {
        self.apply(data, &*self.inverse_m, &*self.forward_n);
    }

    /// [`Self::isfft`] on a raw vectorized frame, in place.
    pub fn isfft_vec(&self, data: &mut [C64]) {
        self.apply(data, &*self.forward_m, &*self.inverse_n);
    }
}

/// `F_M X F_N^H`.
pub fn isfft(grid: DdGrid) -> TfGrid {
    SymplecticFft::new(grid.rows(), grid.cols()).isfft(grid)
}

/// `F_M^H Y F_N`.
pub fn sfft(grid: TfGrid) -> DdGrid {
    SymplecticFft::new(grid.rows(), grid.cols()).sfft(grid)
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Dense `F_M X F_N^H` from explicit DFT matrices.
    fn isfft_dense(x: &DdGrid) -> Vec<C64> {
        let (m, n) = (x.rows(), x.cols());
        let f = |k: usize, q: usize, len: usize| {
            C64::from_polar(1.0 / (len as f64).sqrt(), -2.0 * PI * (k * q) as f64 / len as f64)
        };
        let mut out = vec![C64::new(0.0, 0.0); m * n];
        for p in 0..m {
            for q in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..m {
                    for b in 0..n {
                        acc += f(p, a, m) * x.get(a, b) * f(q, b, n).conj();
                    }
                }
                out[q * m + p] = acc;
            }
        }
        out
    }

    fn grid_from_seed(m: usize, n: usize, seed: u64) -> DdGrid {
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 20001) as f64 / 10000.0 - 1.0
        };
        let data = (0..m * n).map(|_| C64::new(next(), next())).collect();
        DdGrid::from_vec(m, n, data).unwrap()
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = DdGrid::zeros(2, 2);
        x.set(0, 0, C64::new(1.0, 0.0));
        let y = isfft(x);
        for v in y.as_vec() {
            assert!((v - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_dft_matrices() {
        for (m, n) in [(4, 4), (8, 4), (3, 5), (16, 16)] {
            let x = grid_from_seed(m, n, 42 + m as u64);
            let expected = isfft_dense(&x);
            let got = isfft(x);
            for (a, b) in got.as_vec().iter().zip(&expected) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip_and_unitary(m in 2usize..17, n in 2usize..17, seed in any::<u64>()) {
            let x = grid_from_seed(m, n, seed);
            let tf = isfft(x.clone());
            prop_assert!((tf.frobenius_norm_sqr().sqrt() - x.frobenius_norm_sqr().sqrt()).abs() < 1e-12);
            let back = sfft(tf);
            for (a, b) in back.as_vec().iter().zip(x.as_vec()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
