//! Small dense square matrices used for the boundary metric `g₀`.
//!
//! Dimensions here are the boundary dimension `n` (typically 1 to 3), so
//! everything is stored row-major in a `Vec`. Heavier `f64` linear algebra
//! (LU solves, determinants of Jacobians) goes through `nalgebra`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds from a row-major vector of length `n²`.
    pub fn from_row_major(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data has wrong length");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    /// `M v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `uᵀ M v`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                acc += u[i] * self[(i, j)] * v[j];
            }
        }
        acc
    }

    /// `vᵀ M v`.
    pub fn quad(&self, v: &[T]) -> T {
        self.bilinear(v, v)
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Maximum of `|M - Mᵀ|` entries.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self[(i, j)] == T::zero()))
    }

    /// Lower Cholesky factor; fails with a domain error unless the matrix is
    /// symmetric positive definite.
    pub fn cholesky(&self) -> Result<Mat<T>> {
        let n = self.n;
        let mut l = Mat::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Domain(format!(
                    "matrix not positive definite (pivot {j} = {d})"
                )));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(l)
    }

    /// Inverse and determinant of a symmetric positive definite matrix.
    pub fn spd_inverse_det(&self) -> Result<(Mat<T>, T)> {
        let n = self.n;
        let l = self.cholesky()?;
        let det = (0..n).map(|i| l[(i, i)]).fold(T::one(), |a, b| a * b).powi(2);
        // Solve L Lᵀ X = I column by column.
        let mut inv = Mat::zeros(n);
        for c in 0..n {
            let mut z = vec![T::zero(); n];
            for i in 0..n {
                let mut s = if i == c { T::one() } else { T::zero() };
                for k in 0..i {
                    s -= l[(i, k)] * z[k];
                }
                z[i] = s / l[(i, i)];
            }
            let mut x = vec![T::zero(); n];
            for i in (0..n).rev() {
                let mut s = z[i];
                for k in (i + 1)..n {
                    s -= l[(k, i)] * x[k];
                }
                x[i] = s / l[(i, i)];
            }
            for r in 0..n {
                inv[(r, c)] = x[r];
            }
        }
        Ok((inv, det))
    }

    /// Smallest eigenvalue of a symmetric matrix, by cyclic Jacobi rotations.
    pub fn min_eigenvalue(&self) -> T {
        let n = self.n;
        let mut a = self.clone();
        for _ in 0..64 {
            let mut off = T::zero();
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off <= T::epsilon() * T::epsilon() * (T::one() + a.trace().abs()) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)] == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::c(2.0) * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).fold(T::infinity(), T::min)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spd_inverse_and_det() {
        let m = Mat::from_row_major(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let (inv, det) = m.spd_inverse_det().unwrap();
        let lu = nalgebra::DMatrix::from_row_slice(3, 3, m.as_slice());
        assert_relative_eq!(det, lu.determinant(), epsilon = 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let prod: f64 = (0..3).map(|k| m[(i, k)] * inv[(k, j)]).sum();
                assert_relative_eq!(prod, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat::from_row_major(2, vec![1.0_f64, 2.0, 2.0, 1.0]);
        assert!(matches!(m.cholesky(), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobi_min_eigenvalue_matches_nalgebra() {
        let m = Mat::from_row_major(3, vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let sym = nalgebra::DMatrix::from_row_slice(3, 3, m.as_slice()).symmetric_eigen();
        let expect = sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(m.min_eigenvalue(), expect, epsilon = 1e-12);
    }
}
