//! Real symmetric tridiagonal matrices and their eigendecomposition.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symmetric tridiagonal matrix stored as its diagonal and first
/// off-diagonal (`offdiag[k]` couples rows `k` and `k + 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, offdiag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidInput("empty tridiagonal matrix".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "off-diagonal length {} does not match dimension {}",
                offdiag.len(),
                diag.len()
            )));
        }
        if diag.iter().chain(&offdiag).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix element".into()));
        }
        Ok(Self { diag, offdiag })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out = (self - shift) * x / scale`, generic over the element type.
    pub fn apply_shifted<T>(&self, x: &[T], out: &mut [T], shift: f64, scale: f64)
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        let inv = 1.0 / scale;
        if n == 1 {
            out[0] = x[0] * ((self.diag[0] - shift) * inv);
            return;
        }
        out[0] = x[0] * ((self.diag[0] - shift) * inv) + x[1] * (self.offdiag[0] * inv);
        for k in 1..n - 1 {
            out[k] = x[k - 1] * (self.offdiag[k - 1] * inv)
                + x[k] * ((self.diag[k] - shift) * inv)
                + x[k + 1] * (self.offdiag[k] * inv);
        }
        out[n - 1] =
            x[n - 2] * (self.offdiag[n - 2] * inv) + x[n - 1] * ((self.diag[n - 1] - shift) * inv);
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..n {
            let left = if k > 0 {
                self.offdiag[k - 1].abs()
            } else {
                0.0
            };
            let right = if k + 1 < n {
                self.offdiag[k].abs()
            } else {
                0.0
            };
            lo = lo.min(self.diag[k] - left - right);
            hi = hi.max(self.diag[k] + left + right);
        }
        (lo, hi)
    }

    /// Dense row-major copy, mostly useful for small-matrix checks.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            m[k * n + k] = self.diag[k];
            if k + 1 < n {
                m[k * n + k + 1] = self.offdiag[k];
                m[(k + 1) * n + k] = self.offdiag[k];
            }
        }
        m
    }
}

/// Full eigendecomposition `H = V diag(values) V^T`.
///
/// `vectors` is row-major with the basis index as row and the eigenvalue
/// index as column, so column `j` is the eigenvector of `values[j]`.
#[derive(Debug, Clone)]
pub struct TridiagonalEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    dim: usize,
}

const MAX_QL_SWEEPS: usize = 60;

impl TridiagonalEigen {
    /// Implicit QL with Wilkinson-type shifts (the EISPACK `tql2` scheme),
    /// accumulating the rotations into the eigenvector matrix.
    pub fn compute(h: &SymTridiagonal) -> Result<Self> {
        let n = h.dim();
        let mut d = h.diag.clone();
        let mut e = vec![0.0; n];
        e[..n - 1].copy_from_slice(&h.offdiag);

        // Rows of `zt` are eigenvectors while iterating, so each Givens
        // rotation touches two contiguous rows.
        let mut zt = vec![0.0; n * n];
        for i in 0..n {
            zt[i * n + i] = 1.0;
        }

        let eps = f64::EPSILON;
        let mut f = 0.0;
        let mut tst1: f64 = 0.0;
        for l in 0..n {
            tst1 = tst1.max(d[l].abs() + e[l].abs());
            let mut m = l;
            while m < n {
                if e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }
            // e[n-1] == 0 guarantees m < n.
            if m > l {
                let mut sweeps = 0;
                loop {
                    sweeps += 1;
                    if sweeps > MAX_QL_SWEEPS {
                        return Err(Error::EigenNoConvergence { index: l });
                    }
                    let mut g = d[l];
                    let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    d[l] = e[l] / (p + r);
                    d[l + 1] = e[l] * (p + r);
                    let dl1 = d[l + 1];
                    let mut h_shift = g - d[l];
                    for di in d.iter_mut().skip(l + 2) {
                        *di -= h_shift;
                    }
                    f += h_shift;

                    p = d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * e[i];
                        h_shift = c * p;
                        r = p.hypot(e[i]);
                        e[i + 1] = s * r;
                        s = e[i] / r;
                        c = p / r;
                        p = c * d[i] - s * g;
                        d[i + 1] = h_shift + s * (c * g + s * d[i]);

                        let (head, tail) = zt.split_at_mut((i + 1) * n);
                        let row_i = &mut head[i * n..];
                        let row_next = &mut tail[..n];
                        for (zi, zn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                            let hh = *zn;
                            *zn = s * *zi + c * hh;
                            *zi = c * *zi - s * hh;
                        }
                    }
                    p = -s * s2 * c3 * el1 * e[l] / dl1;
                    e[l] = s * p;
                    d[l] = c * p;
                    if e[l].abs() <= eps * tst1 {
                        break;
                    }
                }
            }
            d[l] += f;
            e[l] = 0.0;
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        let values: Vec<f64> = order.iter().map(|&j| d[j]).collect();
        let mut vectors = vec![0.0; n * n];
        for (col, &j) in order.iter().enumerate() {
            let row = &zt[j * n..(j + 1) * n];
            for (k, &v) in row.iter().enumerate() {
                vectors[k * n + col] = v;
            }
        }
        Ok(Self {
            values,
            vectors,
            dim: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Column `j` as an owned vector.
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|k| self.vectors[k * self.dim + j])
            .collect()
    }

    /// Largest `|V^T V - 1|` entry.
    pub fn orthogonality_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let dot: f64 = (0..n)
                    .map(|k| self.vectors[k * n + i] * self.vectors[k * n + j])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(h: &SymTridiagonal, eig: &TridiagonalEigen) -> f64 {
        let n = h.dim();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            let v = eig.vector(j);
            let mut hv = vec![0.0; n];
            h.apply_shifted(&v, &mut hv, 0.0, 1.0);
            for k in 0..n {
                worst = worst.max((hv[k] - eig.values[j] * v[k]).abs());
            }
        }
        worst
    }

    #[test]
    fn two_by_two_hopping() {
        let h = SymTridiagonal::new(vec![0.0, 0.0], vec![-2.0]).unwrap();
        let eig = TridiagonalEigen::compute(&h).unwrap();
        assert!((eig.values[0] + 2.0).abs() < 1e-14);
        assert!((eig.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_matrix_is_sorted() {
        let h = SymTridiagonal::new(vec![1.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let eig = TridiagonalEigen::compute(&h).unwrap();
        assert_eq!(eig.values, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn one_dimensional() {
        let h = SymTridiagonal::new(vec![3.5], vec![]).unwrap();
        let eig = TridiagonalEigen::compute(&h).unwrap();
        assert_eq!(eig.values, vec![3.5]);
        assert_eq!(eig.vectors, vec![1.0]);
    }

    #[test]
    fn matches_dense_solver() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|k| ((k * 7 % 11) as f64) * 0.3 - 1.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|k| -1.0 - 0.05 * k as f64).collect();
        let h = SymTridiagonal::new(diag, off).unwrap();
        let eig = TridiagonalEigen::compute(&h).unwrap();

        let dense = nalgebra::DMatrix::from_row_slice(n, n, &h.to_dense());
        let mut reference: Vec<f64> = dense
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        reference.sort_by(f64::total_cmp);
        for (a, b) in eig.values.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(eig.orthogonality_residual() < 1e-12);
        assert!(residual(&h, &eig) < 1e-12);
    }

    #[test]
    fn gershgorin_contains_spectrum() {
        let h = SymTridiagonal::new(vec![0.0; 3], vec![-8f64.sqrt(); 2]).unwrap();
        let (lo, hi) = h.gershgorin_bounds();
        let eig = TridiagonalEigen::compute(&h).unwrap();
        assert!(eig.values.iter().all(|&v| v >= lo && v <= hi));
        assert!((eig.values[0] + 4.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(SymTridiagonal::new(vec![0.0; 3], vec![1.0]).is_err());
        assert!(SymTridiagonal::new(vec![], vec![]).is_err());
    }
}
