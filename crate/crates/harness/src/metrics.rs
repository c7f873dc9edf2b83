//! Channel reconstruction error and path-count statistics.

use nalgebra::DMatrix;
use otfs_ce::channel::PathSet;
use otfs_ce::kernel::UpsilonKernel;
use otfs_ce::{OtfsConfig, C64};

use crate::error::{HarnessError, Result};

/// `‖H_true - H_est‖²_F / ‖H_true‖²_F`.
pub fn nmse(h_true: &DMatrix<C64>, h_est: &DMatrix<C64>) -> Result<f64> {
    if h_true.shape() != h_est.shape() {
        return Err(otfs_ce::Error::DimensionMismatch {
            expected: format!("{:?}", h_true.shape()),
            found: format!("{:?}", h_est.shape()),
        }
        .into());
    }
    let reference = h_true.norm_squared();
    if reference == 0.0 {
        return Err(HarnessError::ZeroChannel);
    }
    Ok((h_true - h_est).norm_squared() / reference)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// NMSE between the channels of two path sets, one `H` column at a time, so
/// the `MN x MN` matrices are never stored.
pub fn nmse_paths(cfg: &OtfsConfig, truth: &PathSet, est: &PathSet) -> Result<f64> {
    let kernels = |set: &PathSet| -> Vec<(UpsilonKernel, C64)> {
        set.paths
            .iter()
            .map(|p| (UpsilonKernel::new(cfg, p.tau, p.nu), p.gain))
            .collect()
    };
    let (kt, ke) = (kernels(truth), kernels(est));
    let len = cfg.frame_len();
    let mut col_t = vec![C64::new(0.0, 0.0); len];
    let mut col_e = vec![C64::new(0.0, 0.0); len];
    let (mut err, mut reference) = (0.0, 0.0);
    for k2 in 0..cfg.n {
        for l2 in 0..cfg.m {
            for (col, ks) in [(&mut col_t, &kt), (&mut col_e, &ke)] {
                col.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                for (k, g) in ks {
                    for (v, u) in col.iter_mut().zip(k.column(k2, l2)?) {
                        *v += g * u;
                    }
                }
            }
            reference += col_t.iter().map(|v| v.norm_sqr()).sum::<f64>();
            err += col_t.iter().zip(&col_e).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        }
    }
    if reference == 0.0 {
        return Err(HarnessError::ZeroChannel);
    }
    Ok(err / reference)
}

/// Mean detected path count.
pub fn avg_paths(counts: &[usize]) -> Result<f64> {
    if counts.is_empty() {
        return Err(HarnessError::Empty("no realizations"));
    }
    Ok(counts.iter().sum::<usize>() as f64 / counts.len() as f64)
}
