//! Small dense symmetric matrices: storage, cyclic Jacobi eigendecomposition
//! and the Moore–Penrose pseudoinverse built from it.

use crate::error::{Error, Result};

/// Default relative rank tolerance for eigenvalue clamping.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 64;

/// Dense symmetric `n x n` matrix, stored row-major in full.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Builds a matrix from the upper triangle produced by `f(i, j)` with `i <= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Rows must be square and exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "matrix row has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(SymMatrix { n, data })
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `vᵀ M v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// General product; the result is symmetrized, so only use it where the
    /// true product is symmetric.
    pub fn mul(&self, other: &SymMatrix) -> SymMatrix {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        SymMatrix::from_fn(n, |i, j| 0.5 * (out[i * n + j] + out[j * n + i]))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Spectral decomposition `M = U diag(lambda) Uᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    n: usize,
    /// Row-major; column `k` is the eigenvector of `lambda[k]`.
    u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub rank: usize,
    pub tol_used: f64,
}

impl EigenDecomp {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn u(&self, i: usize, k: usize) -> f64 {
        self.u[i * self.n + k]
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.u(i, k)).collect()
    }

    /// `Uᵀ v`
    pub fn to_basis(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|i| self.u(i, k) * v[i]).sum())
            .collect()
    }

    /// `U c`
    pub fn from_basis(&self, c: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|k| self.u(i, k) * c[k]).sum())
            .collect()
    }

    /// Whether eigenvalue `k` is counted in the numerical range.
    #[inline]
    pub fn in_range(&self, k: usize) -> bool {
        self.lambda[k].abs() > self.tol_used
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda.first().copied().unwrap_or(0.0)
    }

    /// Smallest eigenvalue counted in the range, if any.
    pub fn lambda_min_nonzero(&self) -> Option<f64> {
        (0..self.n)
            .filter(|&k| self.in_range(k))
            .map(|k| self.lambda[k])
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            })
    }

    /// `U diag(f(lambda_k, k)) Uᵀ`
    pub fn spectral_map(&self, mut f: impl FnMut(f64, usize) -> f64) -> SymMatrix {
        let w: Vec<f64> = (0..self.n).map(|k| f(self.lambda[k], k)).collect();
        SymMatrix::from_fn(self.n, |i, j| {
            (0..self.n)
                .map(|k| self.u(i, k) * w[k] * self.u(j, k))
                .sum()
        })
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.spectral_map(|l, _| l)
    }

    /// `max |UᵀU - I|`
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.n {
            for b in 0..self.n {
                let s: f64 = (0..self.n).map(|i| self.u(i, a) * self.u(i, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Eigenvalues whose magnitude is at most `rel_tol * max(max|lambda|, MIN_POSITIVE)`
/// are set to exactly zero and excluded from the rank.
pub fn eig_sym(m: &SymMatrix, rel_tol: f64) -> Result<EigenDecomp> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must be positive, got {rel_tol}"
        )));
    }
    let n = m.dim();
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..n {
            diag += a[i * n + i] * a[i * n + i];
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off == 0.0 || off <= (f64::EPSILON * f64::EPSILON) * 1e-4 * diag {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]));
    let mut lambda: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let mut u = vec![0.0; n * n];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..n {
            u[i * n + new_k] = v[i * n + old_k];
        }
    }

    let scale = lambda.iter().fold(0.0f64, |s, l| s.max(l.abs()));
    let tol_used = rel_tol * scale.max(f64::MIN_POSITIVE);
    for l in lambda.iter_mut() {
        if l.abs() <= tol_used {
            *l = 0.0;
        }
    }
    let rank = lambda.iter().filter(|l| l.abs() > tol_used).count();
    Ok(EigenDecomp {
        n,
        u,
        lambda,
        rank,
        tol_used,
    })
}

/// Moore–Penrose pseudoinverse `U diag(1/lambda on range, 0) Uᵀ`.
pub fn pinv_from_eig(e: &EigenDecomp) -> SymMatrix {
    e.spectral_map(|l, k| if e.in_range(k) { 1.0 / l } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_has_full_rank() {
        let e = eig_sym(&SymMatrix::identity(3), 1e-10).unwrap();
        assert_eq!(e.lambda, vec![1.0, 1.0, 1.0]);
        assert_eq!(e.rank, 3);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let e = eig_sym(&SymMatrix::zeros(2), 1e-10).unwrap();
        assert_eq!(e.lambda, vec![0.0, 0.0]);
        assert_eq!(e.rank, 0);
        assert_eq!(pinv_from_eig(&e), SymMatrix::zeros(2));
    }

    #[test]
    fn diagonal_sorted_descending() {
        let e = eig_sym(&SymMatrix::diag(&[1.0, 4.0]), 1e-10).unwrap();
        assert_eq!(e.lambda, vec![4.0, 1.0]);
        // U is a signed permutation of the axes
        assert!(close(e.u(1, 0).abs(), 1.0, 1e-15));
        assert!(close(e.u(0, 1).abs(), 1.0, 1e-15));
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(eig_sym(&m, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn asymmetric_rows_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![2.5, 1.0]];
        assert!(SymMatrix::from_rows(&rows).is_err());
    }

    #[test]
    fn pinv_of_diagonal() {
        let e = eig_sym(&SymMatrix::diag(&[2.0, 0.0]), 1e-10).unwrap();
        let p = pinv_from_eig(&e);
        assert!(close(p.get(0, 0), 0.5, 1e-15));
        assert_eq!(p.get(1, 1), 0.0);
        assert_eq!(p.get(0, 1), 0.0);
    }

    #[test]
    fn pinv_of_identity() {
        let e = eig_sym(&SymMatrix::identity(4), 1e-10).unwrap();
        let p = pinv_from_eig(&e);
        assert!(p.sub(&SymMatrix::identity(4)).max_abs() < 1e-15);
    }

    #[test]
    fn pinv_of_rank_one() {
        // ||v||^2 = 4, so (v vᵀ)⁺ = v vᵀ / 16
        let v = [1.0, 1.0, 1.0, 1.0];
        let a = SymMatrix::outer(&v);
        let e = eig_sym(&a, 1e-10).unwrap();
        assert_eq!(e.rank, 1);
        let p = pinv_from_eig(&e);
        assert!(p.sub(&a.scale(1.0 / 16.0)).max_abs() < 1e-14);
        // A A⁺ A = A by direct multiplication
        let apa = a.mul(&p).mul(&a);
        assert!(apa.sub(&a).max_abs() < 1e-13);
    }

    #[test]
    fn roundoff_negative_eigenvalue_clamped() {
        let mut m = SymMatrix::diag(&[1.0, -1e-14]);
        m.set(0, 1, 0.0);
        let e = eig_sym(&m, 1e-10).unwrap();
        assert_eq!(e.lambda, vec![1.0, 0.0]);
        assert_eq!(e.rank, 1);
    }

    #[test]
    fn dense_reconstruction() {
        let m = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 3.0, 0.5],
            vec![-2.0, 0.5, 5.0],
        ])
        .unwrap();
        let e = eig_sym(&m, 1e-10).unwrap();
        let err = e.reconstruct().sub(&m).frobenius();
        assert!(err <= 10.0 * f64::EPSILON * 3.0 * e.lambda_max(), "{err}");
        assert!(e.orthogonality_error() < 1e-14);
    }
}
