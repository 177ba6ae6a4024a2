//! Dense symmetric helpers: generalized eigenproblems, SPD solves and
//! B-orthonormalization with a relative drop tolerance.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative threshold below which directions of a Gram matrix are treated as
/// linearly dependent.
pub const DROP_TOL: f64 = 1e-12;

/// Eigenpairs of `A x = μ B x`, ascending, with `Xᵀ B X = I`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Factorization(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

/// Basis `T` of the numerically nonsingular part of the Gram matrix `b`
/// with `Tᵀ b T = I`. Directions whose eigenvalue falls below
/// `drop_tol · λ_max` are discarded.
pub fn orthonormalizer(b: MatRef<'_, f64>, drop_tol: f64) -> Result<Mat<f64>> {
    let (vals, vecs) = sym_eigen(b)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(Error::Factorization("Gram matrix has no positive direction".into()));
    }
    // keep descending-by-eigenvalue order for stable column ordering
    let keep: Vec<usize> = (0..vals.len())
        .rev()
        .filter(|&k| vals[k] > drop_tol * max)
        .collect();
    let n = b.nrows();
    Ok(Mat::from_fn(n, keep.len(), |i, j| {
        let k = keep[j];
        vecs[(i, k)] / vals[k].sqrt()
    }))
}

/// Solve the symmetric-definite pencil `(a, b)`.
///
/// `b` is pre-orthonormalized with [`orthonormalizer`], so a singular or
/// nearly singular `b` yields fewer eigenpairs rather than an error.
pub fn generalized_eigen(
    a: MatRef<'_, f64>,
    b: MatRef<'_, f64>,
    drop_tol: f64,
) -> Result<GeneralizedEigen> {
    assert_eq!(a.nrows(), a.ncols());
    assert_eq!(a.nrows(), b.nrows());
    let t = orthonormalizer(b, drop_tol)?;
    let mut reduced = t.transpose() * a * &t;
    symmetrize(&mut reduced);
    let (values, y) = sym_eigen(reduced.as_ref())?;
    let mut vectors = &t * &y;
    for j in 0..vectors.ncols() {
        fix_sign(&mut vectors, j);
    }
    Ok(GeneralizedEigen { values, vectors })
}

/// Flip column `j` so its largest-magnitude entry is positive.
pub fn fix_sign(m: &mut Mat<f64>, j: usize) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for i in 0..m.nrows() {
        let v = m[(i, j)];
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        for i in 0..m.nrows() {
            m[(i, j)] = -m[(i, j)];
        }
    }
}

/// Solver for a small symmetric positive (semi)definite Gram matrix.
///
/// Tries Cholesky first; on failure it falls back to a pseudo-inverse built
/// from the eigendecomposition with [`DROP_TOL`].
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Cholesky(Mat<f64>),
    Pseudo { vectors: Mat<f64>, inv_values: Vec<f64> },
}

impl SpdSolver {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self> {
        match a.llt(Side::Lower) {
            Ok(llt) => Ok(SpdSolver::Cholesky(llt.L().to_owned())),
            Err(_) => {
                log::warn!("Gram matrix not numerically SPD; using pseudo-inverse");
                Self::pseudo(a)
            }
        }
    }

    pub fn pseudo(a: MatRef<'_, f64>) -> Result<Self> {
        let (vals, vecs) = sym_eigen(a)?;
        let max = vals.iter().cloned().fold(0.0f64, f64::max);
        let inv_values = vals
            .iter()
            .map(|&v| if v > DROP_TOL * max { 1.0 / v } else { 0.0 })
            .collect();
        Ok(SpdSolver::Pseudo {
            vectors: vecs,
            inv_values,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdSolver::Cholesky(l) => l.nrows(),
            SpdSolver::Pseudo { vectors, .. } => vectors.nrows(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        match self {
            SpdSolver::Cholesky(l) => {
                // forward then backward substitution with L Lᵀ
                let mut y = b.to_vec();
                for i in 0..n {
                    let mut s = y[i];
                    for k in 0..i {
                        s -= l[(i, k)] * y[k];
                    }
                    y[i] = s / l[(i, i)];
                }
                for i in (0..n).rev() {
                    let mut s = y[i];
                    for k in (i + 1)..n {
                        s -= l[(k, i)] * y[k];
                    }
                    y[i] = s / l[(i, i)];
                }
                y
            }
            SpdSolver::Pseudo {
                vectors,
                inv_values,
            } => {
                let mut out = vec![0.0; n];
                for (k, &iv) in inv_values.iter().enumerate() {
                    if iv == 0.0 {
                        continue;
                    }
                    let c: f64 = (0..n).map(|i| vectors[(i, k)] * b[i]).sum::<f64>() * iv;
                    for i in 0..n {
                        out[i] += c * vectors[(i, k)];
                    }
                }
                out
            }
        }
    }

    /// `bᵀ A⁻¹ b`.
    pub fn inverse_quadratic(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        dot(&x, b)
    }
}

/// Solve a dense SPD system, returning an error if it is not positive definite.
pub fn solve_spd(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Factorization(format!("dense Cholesky failed: {e:?}")))?;
    Ok(llt.solve(b))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn col_vec(m: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn mat_vec(m: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), x.len());
    let mut out = vec![0.0; m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * xj;
        }
    }
    out
}

/// `mᵀ x`.
pub fn mat_t_vec(m: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.nrows(), x.len());
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * x[i]).sum())
        .collect()
}

pub fn quadratic(m: MatRef<'_, f64>, x: &[f64]) -> f64 {
    dot(x, &mat_vec(m, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigen_is_b_orthonormal() {
        let a = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 });
        let b = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { 1.5 } else if i.abs_diff(j) == 1 { 0.4 } else { 0.0 });
        let ge = generalized_eigen(a.as_ref(), b.as_ref(), DROP_TOL).unwrap();
        let g = ge.vectors.transpose() * &b * &ge.vectors;
        let k = ge.vectors.transpose() * &a * &ge.vectors;
        for i in 0..4 {
            for j in 0..4 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - id).abs() < 1e-12);
                let d = if i == j { ge.values[i] } else { 0.0 };
                assert!((k[(i, j)] - d).abs() < 1e-10);
            }
        }
        assert!(ge.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn singular_b_drops_directions() {
        let b = Mat::<f64>::from_fn(3, 3, |i, j| if i < 2 && j < 2 { 1.0 } else { 0.0 });
        let a = Mat::<f64>::identity(3, 3);
        let ge = generalized_eigen(a.as_ref(), b.as_ref(), DROP_TOL).unwrap();
        assert_eq!(ge.values.len(), 1);
    }

    #[test]
    fn spd_solver_paths_agree() {
        let a = Mat::<f64>::from_fn(5, 5, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 });
        let b: Vec<f64> = (0..5).map(|i| i as f64 - 2.0).collect();
        let x1 = SpdSolver::new(a.as_ref()).unwrap().solve(&b);
        let x2 = SpdSolver::pseudo(a.as_ref()).unwrap().solve(&b);
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-10);
        }
        assert!(matches!(SpdSolver::new(a.as_ref()).unwrap(), SpdSolver::Cholesky(_)));
    }
}
