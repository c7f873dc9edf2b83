//! Cost functions and regularized least squares over CDDPM columns.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::grid::C64;
use crate::kernel::{Cddpm, CddpmColumn};

/// `aᴴ b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Residue-based cost `|rᴴe|² / ‖r‖²`.
pub fn residue_cost(column: &CddpmColumn, residue: &[C64]) -> Result<f64> {
    check_len(column.len(), residue.len())?;
    let energy = column.norm_sqr();
    if energy == 0.0 {
        return Err(Error::ZeroNormColumn);
    }
    Ok(inner(&column.values, residue).norm_sqr() / energy)
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            expected: format!("length {expected}"),
            found: format!("length {found}"),
        });
    }
    Ok(())
}

/// `RᴴR + λI` and `Rᴴy`.
pub(crate) fn normal_equations(r: &Cddpm, y: &[C64], lambda: f64) -> Result<(DMatrix<C64>, DVector<C64>)> {
    if r.is_empty() {
        return Err(Error::Empty("CDDPM has no columns"));
    }
    for col in &r.columns {
        check_len(y.len(), col.len())?;
    }
    let p = r.len();
    let mut gram = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = inner(&r.columns[i].values, &r.columns[j].values);
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
        gram[(i, i)] = C64::new(gram[(i, i)].re + lambda, 0.0);
    }
    let rhs = DVector::from_iterator(p, r.columns.iter().map(|c| inner(&c.values, y)));
    Ok((gram, rhs))
}

pub(crate) fn factor(gram: DMatrix<C64>) -> Result<Cholesky<C64, Dyn>> {
    let p = gram.nrows();
    let scale = (0..p).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let failure = || Error::SolverFailure(format!("{p}x{p} regularized Gram matrix is not positive definite"));
    let chol = Cholesky::new(gram).ok_or_else(failure)?;
    // nalgebra accepts zero pivots; treat pivots at rounding level as singular
    let l = chol.l_dirty();
    if (0..p).any(|i| !(l[(i, i)].re * l[(i, i)].re > 1e-13 * scale)) {
        return Err(failure());
    }
    Ok(chol)
}

/// `bᴴ G⁻¹ b` through the Cholesky factor, so the result is a sum of squares.
pub(crate) fn quadratic_form(chol: &Cholesky<C64, Dyn>, rhs: &DVector<C64>) -> Result<f64> {
    let z = chol
        .l_dirty()
        .solve_lower_triangular(rhs)
        .ok_or_else(|| Error::SolverFailure("singular Cholesky factor".into()))?;
    let value = z.norm_squared();
    if !value.is_finite() {
        return Err(Error::SolverFailure("non-finite observation cost".into()));
    }
    Ok(value)
}

/// Regularized observation-based cost `yᴴR(RᴴR + λI)⁻¹Rᴴy`.
pub fn observation_cost(r: &Cddpm, y: &[C64], lambda: f64) -> Result<f64> {
    let (gram, rhs) = normal_equations(r, y, lambda)?;
    quadratic_form(&factor(gram)?, &rhs)
}

/// Regularized least-squares gains `(RᴴR + λI)⁻¹Rᴴy`.
pub fn rls_gains(r: &Cddpm, y: &[C64], lambda: f64) -> Result<Vec<C64>> {
    let (gram, rhs) = normal_equations(r, y, lambda)?;
    let gains = factor(gram)?.solve(&rhs);
    if gains.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
        return Err(Error::SolverFailure("non-finite gains".into()));
    }
    Ok(gains.as_slice().to_vec())
}

/// `y - R a`.
pub fn residue(r: &Cddpm, gains: &[C64], y: &[C64]) -> Vec<C64> {
    let fit = r.combine(gains);
    y.iter().zip(&fit).map(|(a, b)| a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<C64> {
        (0..len)
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    fn col(values: Vec<C64>) -> CddpmColumn {
        CddpmColumn { values, tau: 0.0, nu: 0.0 }
    }

    fn random_cddpm(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Cddpm {
        Cddpm::new((0..cols).map(|_| col(random_vec(rng, rows))).collect())
    }

    /// Gauss-Jordan inverse with partial pivoting.
    fn dense_inverse(a: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let n = a.len();
        let mut aug: Vec<Vec<C64>> = a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut r = row.clone();
                r.extend((0..n).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)));
                r
            })
            .collect();
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| aug[x][c].norm().total_cmp(&aug[y][c].norm())).unwrap();
            aug.swap(c, piv);
            let d = aug[c][c];
            aug[c].iter_mut().for_each(|v| *v /= d);
            for r in 0..n {
                if r != c {
                    let f = aug[r][c];
                    let pivot_row = aug[c].clone();
                    aug[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        aug.into_iter().map(|r| r[n..].to_vec()).collect()
    }

    fn dense_observation_cost(r: &Cddpm, y: &[C64], lambda: f64) -> f64 {
        let p = r.len();
        let a: Vec<Vec<C64>> = (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        let mut v: C64 = r.columns[i].values.iter().zip(&r.columns[j].values).map(|(x, z)| x.conj() * z).sum();
                        if i == j {
                            v += lambda;
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let inv = dense_inverse(&a);
        let b: Vec<C64> = r.columns.iter().map(|c| c.values.iter().zip(y).map(|(x, z)| x.conj() * z).sum()).collect();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..p {
            for j in 0..p {
                acc += b[i].conj() * inv[i][j] * b[j];
            }
        }
        acc.re
    }

    #[test]
    fn residue_cost_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = col(random_vec(&mut rng, 16));
        let e = r.values.clone();
        assert!((residue_cost(&r, &e).unwrap() - r.norm_sqr()).abs() < 1e-12);

        let a = col(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let e = vec![C64::new(0.0, 0.0), C64::new(3.0, -1.0)];
        assert_eq!(residue_cost(&a, &e).unwrap(), 0.0);

        let z = col(vec![C64::new(0.0, 0.0); 2]);
        assert!(matches!(residue_cost(&z, &e), Err(Error::ZeroNormColumn)));
        assert!(residue_cost(&a, &e[..1]).is_err());
    }

    #[test]
    fn single_column_observation_cost_equals_residue_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = col(random_vec(&mut rng, 32));
        let y = random_vec(&mut rng, 32);
        let phi_y = observation_cost(&Cddpm::new(vec![r.clone()]), &y, 0.0).unwrap();
        let phi_e = residue_cost(&r, &y).unwrap();
        assert!((phi_y - phi_e).abs() < 1e-12 * phi_e.max(1.0));
    }

    #[test]
    fn orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cols: Vec<CddpmColumn> = (0..3)
            .map(|k| {
                let mut v = vec![C64::new(0.0, 0.0); 8];
                v[2 * k] = C64::new(0.6, 0.0);
                v[2 * k + 1] = C64::new(0.0, 0.8);
                col(v)
            })
            .collect();
        let y = random_vec(&mut rng, 8);
        let expected: f64 = cols.iter().map(|c| inner(&c.values, &y).norm_sqr()).sum();
        let got = observation_cost(&Cddpm::new(cols), &y, 0.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn observation_cost_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let r = random_cddpm(&mut rng, 16, 3);
            let y = random_vec(&mut rng, 16);
            let got = observation_cost(&r, &y, 1e-5).unwrap();
            let oracle = dense_observation_cost(&r, &y, 1e-5);
            assert!(((got - oracle) / oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn rls_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = col(random_vec(&mut rng, 16));
        let c = C64::new(-1.5, 0.25);
        let y: Vec<C64> = r.values.iter().map(|v| v * c).collect();
        let g = rls_gains(&Cddpm::new(vec![r]), &y, 0.0).unwrap();
        assert!((g[0] - c).norm() < 1e-12);

        let r = random_cddpm(&mut rng, 64, 4);
        let alpha = random_vec(&mut rng, 4);
        let y = r.combine(&alpha);
        let g = rls_gains(&r, &y, 1e-10).unwrap();
        for (a, b) in g.iter().zip(&alpha) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn normal_equations_residual_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = random_cddpm(&mut rng, 48, 5);
        let y = random_vec(&mut rng, 48);
        let g = rls_gains(&r, &y, 0.0).unwrap();
        let e = residue(&r, &g, &y);
        for c in &r.columns {
            assert!(inner(&c.values, &e).norm() < 1e-9);
        }
    }

    #[test]
    fn solver_failure_is_reported() {
        let v = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let r = Cddpm::new(vec![col(v.clone()), col(v.clone())]);
        assert!(matches!(rls_gains(&r, &v, 0.0), Err(Error::SolverFailure(_))));
        assert!(matches!(observation_cost(&Cddpm::default(), &v, 1.0), Err(Error::Empty(_))));
    }

    proptest! {
        #[test]
        fn residue_cost_scale_invariant(seed in any::<u64>(), re in -10.0f64..10.0, im in -10.0f64..10.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = col(random_vec(&mut rng, 16));
            let e = random_vec(&mut rng, 16);
            let c = C64::new(re, im);
            let scaled = col(r.values.iter().map(|v| v * c).collect());
            let a = residue_cost(&r, &e).unwrap();
            let b = residue_cost(&scaled, &e).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1e-12));
        }

        #[test]
        fn observation_cost_bounded_by_energy(seed in any::<u64>(), p in 1usize..6, lambda in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_cddpm(&mut rng, 24, p);
            let y = random_vec(&mut rng, 24);
            let cost = observation_cost(&r, &y, lambda).unwrap();
            prop_assert!(cost >= 0.0);
            prop_assert!(cost <= norm_sqr(&y) * (1.0 + 1e-12));
        }
    }
}
