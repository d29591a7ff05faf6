//! Small dense matrices (at most 6x6) used per voxel and per frequency, and
//! reductions with a fixed summation order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

/// Largest per-voxel component count (symmetric 3x3 tensors).
pub const MAX_COMPONENTS: usize = 6;

/// Reduction chunk length. Independent of the thread count so sums are
/// reproducible.
const REDUCE_CHUNK: usize = 4096;

/// Row-major real matrix of size `m x m`, `m <= 6`, stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallMat {
    m: usize,
    a: [f64; 36],
}

impl SmallMat {
    pub fn zeros(m: usize) -> Self {
        assert!(m <= MAX_COMPONENTS);
        SmallMat { m, a: [0.0; 36] }
    }

    pub fn identity(m: usize) -> Self {
        let mut s = Self::zeros(m);
        for i in 0..m {
            s.a[i * m + i] = 1.0;
        }
        s
    }

    pub fn from_dmatrix(mat: &DMatrix<f64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols());
        let m = mat.nrows();
        let mut s = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                s.a[i * m + j] = mat[(i, j)];
            }
        }
        s
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.get(i, j))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.m + j] = v;
    }

    /// `out = self * x`.
    #[inline]
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let row = &self.a[i * m..i * m + m];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn scale_add(&mut self, w: f64, other: &SmallMat) {
        for (a, b) in self.a.iter_mut().zip(other.a.iter()) {
            *a += w * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a[..self.m * self.m]
            .iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Row-major complex matrix of size `m x m`, `m <= 6`, stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallCMat {
    m: usize,
    a: [Complex64; 36],
}

impl SmallCMat {
    pub fn zeros(m: usize) -> Self {
        assert!(m <= MAX_COMPONENTS);
        SmallCMat {
            m,
            a: [Complex64::new(0.0, 0.0); 36],
        }
    }

    pub fn from_real(mat: &SmallMat) -> Self {
        let mut s = Self::zeros(mat.dim());
        for (c, r) in s.a.iter_mut().zip(mat.a.iter()) {
            *c = Complex64::new(*r, 0.0);
        }
        s
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[i * self.m + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[i * self.m + j] += v;
    }

    /// `out = self * x`.
    #[inline]
    pub fn mul_vec(&self, x: &[Complex64], out: &mut [Complex64]) {
        let m = self.m;
        for i in 0..m {
            let row = &self.a[i * m..i * m + m];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn scale_add(&mut self, w: f64, other: &SmallCMat) {
        for (a, b) in self.a.iter_mut().zip(other.a.iter()) {
            *a += b * w;
        }
    }

    pub fn conj(&self) -> Self {
        let mut s = *self;
        for v in s.a.iter_mut() {
            *v = v.conj();
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.a[..self.m * self.m]
            .iter()
            .fold(0.0, |acc, v| acc.max(v.norm()))
    }

    pub fn max_abs_diff(&self, other: &SmallCMat) -> f64 {
        self.a[..self.m * self.m]
            .iter()
            .zip(other.a.iter())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).norm()))
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let m = self.m;
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, via the real symmetric embedding
    /// `[[Re, -Im], [Im, Re]]` (each eigenvalue appears twice).
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let m = self.m;
        let emb = DMatrix::from_fn(2 * m, 2 * m, |r, c| {
            let (i, bi) = (r % m, r / m);
            let (j, bj) = (c % m, c / m);
            let h = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
            match (bi, bj) {
                (0, 0) | (1, 1) => h.re,
                (0, 1) => -h.im,
                _ => h.im,
            }
        });
        let eig = emb.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.into_iter().step_by(2).collect()
    }
}

/// Sum with a fixed chunking, so the result does not depend on how many
/// worker threads are available.
pub fn sum_fixed<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..len.div_ceil(REDUCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * REDUCE_CHUNK;
            let end = (start + REDUCE_CHUNK).min(len);
            (start..end).map(&f).sum::<f64>()
        })
        .collect();
    partials.iter().sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_fixed(a.len(), |i| a[i] * b[i])
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut()
        .zip(x.par_iter())
        .for_each(|(y, x)| *y += alpha * x);
}

/// Inverse of a symmetric matrix, `None` when numerically singular.
pub fn symmetric_inverse(mat: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = mat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let eig = mat.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| l.abs() <= 1e-14 * scale) {
        return None;
    }
    let inv_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let q = &eig.eigenvectors;
    let inv = q * inv_vals * q.transpose();
    Some((&inv + inv.transpose()) * 0.5)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(mat: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = mat
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_sum_matches_naive() {
        let v: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((sum_fixed(v.len(), |i| v[i]) - naive).abs() < 1e-9);
    }

    #[test]
    fn hermitian_eigenvalues_of_rank_one() {
        let v = [Complex64::new(1.0, 1.0), Complex64::new(0.0, -1.0)];
        let mut m = SmallCMat::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                m.set(i, j, v[i] * v[j].conj());
            }
        }
        let ev = m.hermitian_eigenvalues();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_of_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        let inv = symmetric_inverse(&m).unwrap();
        assert!((inv[(0, 0)] + 0.5).abs() < 1e-15);
        assert!(symmetric_inverse(&DMatrix::zeros(2, 2)).is_none());
    }
}
