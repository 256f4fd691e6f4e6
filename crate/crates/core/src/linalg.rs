//! Small dense square matrices.
//!
//! Dimensions in this crate are tiny (d ≤ 10), so everything is plain row-major
//! storage with O(d³) routines. Symmetric eigendecomposition uses the cyclic
//! Jacobi method.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::identity(n);
        m.scale_mut(s);
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Builds a matrix from row-major data of length `n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::invalid("matrix rows must all have length n"));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// vᵀ A v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let r: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
            s += v[i] * r;
        }
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.max_abs().max(1.0);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if (self[(i, j)] - self[(j, i)]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Averages the matrix with its transpose.
    pub fn symmetrize(&self) -> Self {
        let mut s = self.clone();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Lower Cholesky factor, or `None` when the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<Cholesky> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.data[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    /// Eigendecomposition of a symmetric matrix.
    pub fn symmetric_eigen(&self) -> Result<SymmetricEigen> {
        jacobi_eigen(self)
    }

    /// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
    pub fn spectral_norm_symmetric(&self) -> Result<f64> {
        let e = self.symmetric_eigen()?;
        Ok(e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
    }

    /// Spectral norm of a general square matrix, via the eigenvalues of AᵀA.
    pub fn spectral_norm(&self) -> Result<f64> {
        let ata = self.transpose().matmul(self).symmetrize();
        let e = ata.symmetric_eigen()?;
        Ok(e.values
            .iter()
            .fold(0.0_f64, |a, v| a.max(*v))
            .max(0.0)
            .sqrt())
    }

    /// Orthogonal factor `U` of the polar decomposition `A = U P`, i.e. the
    /// orthogonal matrix nearest to `A` in spectral and Frobenius norm.
    /// `None` when `A` is (numerically) singular.
    pub fn polar_orthogonal(&self) -> Option<Matrix> {
        let ata = self.transpose().matmul(self).symmetrize();
        let e = ata.symmetric_eigen().ok()?;
        let top = e.values.iter().cloned().fold(0.0_f64, f64::max);
        if e.values.iter().any(|&v| v <= 1e-12 * top.max(1e-300)) {
            return None;
        }
        // (AᵀA)^{-1/2} = V diag(λ^{-1/2}) Vᵀ
        let inv_sqrt: Vec<f64> = e.values.iter().map(|v| 1.0 / v.sqrt()).collect();
        let p_inv = e.reassemble_with(&inv_sqrt);
        Some(self.matmul(&p_inv))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// ln |A|.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n)
            .map(|i| self.l[i * self.n + i].ln())
            .sum::<f64>()
    }

    /// `L z`.
    pub fn factor_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * z[k]).sum())
            .collect()
    }

    /// vᵀ A⁻¹ v via a forward solve.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> f64 {
        let n = self.n;
        let mut z = [0.0_f64; 16];
        let mut heap;
        let z: &mut [f64] = if n <= 16 {
            &mut z[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = v[i] - row.iter().zip(&z[..i]).map(|(a, b)| a * b).sum::<f64>();
            z[i] = s / self.l[i * n + i];
            acc += z[i] * z[i];
        }
        acc
    }
}

/// Eigenvalues (ascending) with eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// V diag(values) Vᵀ for replacement eigenvalues.
    pub fn reassemble_with(&self, values: &[f64]) -> Matrix {
        let n = self.vectors.dim();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| v[(i, k)] * values[k] * v[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reassemble(&self) -> Matrix {
        self.reassemble_with(&self.values)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Stops when the off-diagonal Frobenius mass
/// drops below `1e-12 * ‖A‖_F`.
fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen> {
    let n = a.dim();
    if !a.is_finite() {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    if !a.is_symmetric(1e-9) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let mut m = a.symmetrize();
    let mut v = Matrix::identity(n);
    let tol = 1e-12 * a.frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = v[(k, old)];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Rotation by `angle` in the plane; handy in tests and probes.
pub fn rotation2(angle: f64) -> Matrix {
    let (s, c) = angle.sin_cos();
    Matrix {
        n: 2,
        data: vec![c, -s, s, c],
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal() {
        let a = Matrix::diag(&[3.0, 0.5, 2.0]);
        let e = a.symmetric_eigen().unwrap();
        assert_eq!(e.values, vec![0.5, 2.0, 3.0]);
    }

    #[test]
    fn jacobi_reassembles_rotated_matrix() {
        let r = rotation2(0.3);
        let a = r.matmul(&Matrix::diag(&[0.5, 3.0])).matmul(&r.transpose());
        let e = a.symmetric_eigen().unwrap();
        assert!((e.values[0] - 0.5).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        assert!(e.reassemble().sub(&a).max_abs() < 1e-12);
    }

    #[test]
    fn rejects_nonsymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            a.symmetric_eigen(),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn cholesky_log_det_and_mahalanobis() {
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = a.cholesky().unwrap();
        assert!((c.log_det() - 8.0_f64.ln()).abs() < 1e-12);
        // A⁻¹ = [[3,-2],[-2,4]]/8
        let v = [1.0, 1.0];
        assert!((c.mahalanobis_sq(&v) - 3.0 / 8.0).abs() < 1e-12);
        assert!(Matrix::diag(&[1.0, -1.0]).cholesky().is_none());
    }

    #[test]
    fn polar_factor_of_orthogonal_is_itself() {
        let r = rotation2(1.1);
        let u = r.polar_orthogonal().unwrap();
        assert!(u.sub(&r).max_abs() < 1e-12);
        let mut scaled = r.clone();
        scaled.scale_mut(2.5);
        assert!(scaled.polar_orthogonal().unwrap().sub(&r).max_abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_general() {
        let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!((a.spectral_norm().unwrap() - 2.0).abs() < 1e-12);
    }
}
