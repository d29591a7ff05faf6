//! Periodic voxel grids, real and spectral fields, and the discrete Fourier
//! transform pair.
//!
//! The unit cell `(0,1)^d` is cut into `N^d` cubic voxels of side `h = 1/N`.
//! Fields store `m` components per voxel, voxel-major, with axis 0 the
//! fastest-varying index. The forward transform is the unnormalized sum
//! `F_k = sum_b f_b exp(-2 i pi b.k / N)`; the inverse carries `1/N^d`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{Direction, FftEngine};

/// Tolerance on the relative imaginary residue left by an inverse transform.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    side: usize,
    count: usize,
}

impl Grid {
    pub fn new(dim: usize, side: usize) -> Result<Grid> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if side < 2 {
            return Err(Error::InvalidGrid(format!("side {side} < 2")));
        }
        let count = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .filter(|c| {
                c.checked_mul(std::mem::size_of::<Complex64>() * 6)
                    .is_some()
            })
            .ok_or_else(|| Error::InvalidGrid(format!("{side}^{dim} voxels overflow")))?;
        Ok(Grid { dim, side, count })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn voxel_count(&self) -> usize {
        self.count
    }

    /// Cell size `1/N`.
    pub fn h(&self) -> f64 {
        1.0 / self.side as f64
    }

    /// Voxel volume `h^d`, the weight of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.count as f64
    }

    /// Linear index of a multi-index with entries in `0..N`.
    #[inline]
    pub fn index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .rev()
            .fold(0, |acc, &b| acc * self.side + b)
    }

    /// Linear index of any `beta` in `Z^d`, reduced periodically.
    pub fn wrap_index(&self, beta: &[i64]) -> usize {
        let n = self.side as i64;
        beta[..self.dim]
            .iter()
            .rev()
            .fold(0, |acc, &b| acc * self.side + b.rem_euclid(n) as usize)
    }

    /// Multi-index of a linear index; unused trailing axes are zero.
    #[inline]
    pub fn multi_index(&self, mut lin: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for o in out.iter_mut().take(self.dim) {
            *o = lin % self.side;
            lin /= self.side;
        }
        out
    }
}

/// Signed frequency for grid index `k`: `k` if `k <= N/2`, else `k - N`.
/// Even `N = 2M` maps onto `{-M+1, ..., M}`; the returned flag marks the
/// Nyquist index `k = M`.
pub fn centered_freq(k: usize, side: usize) -> (i64, bool) {
    debug_assert!(k < side);
    let half = side / 2;
    let nyquist = side.is_multiple_of(2) && k == half;
    if k <= half {
        (k as i64, nyquist)
    } else {
        (k as i64 - side as i64, false)
    }
}

/// Real field with `components` values per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelField {
    grid: Grid,
    components: usize,
    data: Vec<f64>,
}

impl VoxelField {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        VoxelField {
            grid,
            components,
            data: vec![0.0; components * grid.voxel_count()],
        }
    }

    pub fn from_vec(grid: Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        if components == 0 || data.len() != components * grid.voxel_count() {
            return Err(Error::InvalidArgument(format!(
                "field length {} does not match {} components on {} voxels",
                data.len(),
                components,
                grid.voxel_count()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("voxel field".into()));
        }
        Ok(VoxelField {
            grid,
            components,
            data,
        })
    }

    /// Same value `v` (length `components`) in every voxel.
    pub fn constant(grid: Grid, v: &[f64]) -> Self {
        let mut f = Self::zeros(grid, v.len());
        f.data
            .par_chunks_mut(v.len())
            .for_each(|c| c.copy_from_slice(v));
        f
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Components of voxel `lin`.
    pub fn voxel(&self, lin: usize) -> &[f64] {
        &self.data[lin * self.components..(lin + 1) * self.components]
    }

    pub fn voxel_mut(&mut self, lin: usize) -> &mut [f64] {
        &mut self.data[lin * self.components..(lin + 1) * self.components]
    }

    /// Component `c` at any `beta` in `Z^d` (periodic).
    pub fn at(&self, beta: &[i64], c: usize) -> f64 {
        self.data[self.grid.wrap_index(beta) * self.components + c]
    }

    /// Voxel mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.components;
        let n = self.grid.voxel_count();
        (0..m)
            .map(|c| crate::linalg::sum_fixed(n, |v| self.data[v * m + c]) / n as f64)
            .collect()
    }

    /// `h^d`-weighted inner product.
    pub fn inner(&self, other: &VoxelField) -> f64 {
        crate::linalg::dot(&self.data, &other.data) * self.grid.cell_volume()
    }

    /// `h^d`-weighted norm.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Complex Fourier coefficients, indexed by `k` in `{0..N-1}^d` like a
/// [`VoxelField`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    components: usize,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn from_vec(grid: Grid, components: usize, data: Vec<Complex64>) -> Result<Self> {
        if components == 0 || data.len() != components * grid.voxel_count() {
            return Err(Error::InvalidArgument(format!(
                "spectral length {} does not match {} components on {} voxels",
                data.len(),
                components,
                grid.voxel_count()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("spectral field".into()));
        }
        Ok(SpectralField {
            grid,
            components,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn coef(&self, k: usize, c: usize) -> Complex64 {
        self.data[k * self.components + c]
    }

    /// Largest violation of `F(k) = conj(F(-k mod N))`, relative to the
    /// largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid;
        let m = self.components;
        let scale = self.data.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..g.voxel_count())
            .into_par_iter()
            .map(|k| {
                let mi = g.multi_index(k);
                let neg: Vec<i64> = mi.iter().map(|&x| -(x as i64)).collect();
                let kn = g.wrap_index(&neg);
                (0..m)
                    .map(|c| (self.coef(k, c) - self.coef(kn, c).conj()).norm())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        worst / scale
    }
}

/// Unnormalized forward DFT of every component.
pub fn dft_forward(field: &VoxelField) -> SpectralField {
    let engine = FftEngine::new(&field.grid);
    let mut data: Vec<Complex64> = field
        .data
        .par_iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    engine.transform(
        &mut data,
        field.components,
        Direction::Forward,
        &mut Vec::new(),
    );
    SpectralField {
        grid: field.grid,
        components: field.components,
        data,
    }
}

/// Inverse DFT with the `1/N^d` factor. The imaginary part is dropped after
/// checking it is negligible.
pub fn dft_inverse(spec: &SpectralField) -> Result<VoxelField> {
    let engine = FftEngine::new(&spec.grid);
    let mut data = spec.data.clone();
    engine.transform(
        &mut data,
        spec.components,
        Direction::Inverse,
        &mut Vec::new(),
    );
    let data = real_part_checked(&data, 1.0 / spec.grid.voxel_count() as f64, 0.0)?;
    Ok(VoxelField {
        grid: spec.grid,
        components: spec.components,
        data,
    })
}

/// Scaled real part of `data`, failing when the imaginary residue exceeds
/// [`IMAGINARY_TOLERANCE`] relative to the largest magnitude.
/// Real part of `data * scale`. The imaginary residue is measured against the
/// larger of the data magnitude and `floor`, so pure round-off output passes.
pub(crate) fn real_part_checked(data: &[Complex64], scale: f64, floor: f64) -> Result<Vec<f64>> {
    let (max_im, max_abs) = data
        .par_iter()
        .map(|v| (v.im.abs(), v.norm()))
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    if !max_abs.is_finite() {
        return Err(Error::NonFinite("inverse transform".into()));
    }
    let reference = max_abs.max(floor);
    if reference > 0.0 && max_im > IMAGINARY_TOLERANCE * reference {
        return Err(Error::ImaginaryResidue {
            residue: max_im / reference,
            tolerance: IMAGINARY_TOLERANCE,
        });
    }
    Ok(data.par_iter().map(|v| v.re * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = Grid::new(3, 8).unwrap();
        assert_eq!(g.voxel_count(), 512);
        let g = Grid::new(1, 1024).unwrap();
        assert_eq!(g.voxel_count(), 1024);
        assert_eq!(g.h(), 1.0 / 1024.0);
        assert!(Grid::new(3, 1).is_err());
        assert!(Grid::new(4, 8).is_err());
        assert!(Grid::new(0, 8).is_err());
        assert!(Grid::new(3, 1 << 30).is_err());
    }

    #[test]
    fn centered_frequencies() {
        assert_eq!(centered_freq(0, 8), (0, false));
        assert_eq!(centered_freq(7, 8), (-1, false));
        assert_eq!(centered_freq(4, 8), (4, true));
        assert_eq!(centered_freq(4, 9), (4, false));
        assert_eq!(centered_freq(5, 9), (-4, false));
    }

    #[test]
    fn index_roundtrip_and_wrap() {
        let g = Grid::new(3, 5).unwrap();
        for lin in 0..g.voxel_count() {
            let mi = g.multi_index(lin);
            assert_eq!(g.index(&mi), lin);
        }
        assert_eq!(g.wrap_index(&[-1, 5, 7]), g.index(&[4, 0, 2]));
    }

    #[test]
    fn constant_field_transform() {
        let g = Grid::new(2, 6).unwrap();
        let f = VoxelField::constant(g, &[2.5]);
        let s = dft_forward(&f);
        assert!((s.coef(0, 0) - Complex64::new(36.0 * 2.5, 0.0)).norm() < 1e-12);
        for k in 1..g.voxel_count() {
            assert!(s.coef(k, 0).norm() <= 1e-12 * 36.0 * 2.5);
        }
    }

    #[test]
    fn delta_transform_is_flat() {
        let g = Grid::new(3, 4).unwrap();
        let mut f = VoxelField::zeros(g, 1);
        f.data_mut()[0] = 3.0;
        let s = dft_forward(&f);
        for k in 0..g.voxel_count() {
            assert!((s.coef(k, 0) - Complex64::new(3.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn inverse_of_zero_mode() {
        let g = Grid::new(2, 4).unwrap();
        let mut data = vec![Complex64::new(0.0, 0.0); 16];
        data[0] = Complex64::new(16.0, 0.0);
        let f = dft_inverse(&SpectralField::from_vec(g, 1, data).unwrap()).unwrap();
        assert!(f.data().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn inverse_rejects_non_hermitian() {
        let g = Grid::new(1, 8).unwrap();
        let mut data = vec![Complex64::new(0.0, 0.0); 8];
        data[1] = Complex64::new(1.0, 0.0);
        let err = dft_inverse(&SpectralField::from_vec(g, 1, data).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ImaginaryResidue { .. }));
    }

    #[test]
    fn rejects_bad_lengths_and_nan() {
        let g = Grid::new(1, 4).unwrap();
        assert!(VoxelField::from_vec(g, 1, vec![0.0; 3]).is_err());
        assert!(VoxelField::from_vec(g, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }
}
