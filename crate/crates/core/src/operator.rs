//! The discrete Lippmann-Schwinger system
//! `K_beta tau_beta + (Gamma * tau)_beta = p` for `beta` in the mask, with
//! `K_beta = (A_beta^h - A0)^{-1}`.
//!
//! The operator is only ever applied as a function. [`SystemOperator::assemble_dense`]
//! builds the explicit matrix for small grids as an independent check.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::grid::{dft_inverse, Grid, SpectralField, VoxelField};
use crate::microstructure::CoefficientField;

/// Default row limit of the dense assembly.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Debug)]
pub struct SystemOperator {
    coeffs: CoefficientField,
    green: GreenOperator,
}

impl SystemOperator {
    pub fn new(coeffs: CoefficientField, green: GreenOperator) -> Result<Self> {
        if coeffs.grid() != green.grid() {
            return Err(Error::InvalidArgument(
                "coefficient and Green operator grids differ".into(),
            ));
        }
        if coeffs.components() != green.components() || coeffs.reference() != green.reference() {
            return Err(Error::InvalidArgument(
                "coefficient and Green operator physics differ".into(),
            ));
        }
        Ok(SystemOperator { coeffs, green })
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn green(&self) -> &GreenOperator {
        &self.green
    }

    pub fn grid(&self) -> &Grid {
        self.coeffs.grid()
    }

    pub fn components(&self) -> usize {
        self.coeffs.components()
    }

    /// `K tau + Gamma * tau`, restricted to the mask. Fails when `tau` is
    /// nonzero outside the mask.
    pub fn apply(&self, tau: &VoxelField) -> Result<VoxelField> {
        self.check_field(tau)?;
        if let Some(v) = (0..self.grid().voxel_count())
            .find(|&v| !self.coeffs.is_masked_in(v) && tau.voxel(v).iter().any(|&x| x != 0.0))
        {
            return Err(Error::MaskViolation(v));
        }
        self.apply_unchecked(tau)
    }

    pub(crate) fn apply_unchecked(&self, tau: &VoxelField) -> Result<VoxelField> {
        let mut out = self.green.apply_field(tau)?;
        let m = self.components();
        let coeffs = &self.coeffs;
        out.data_mut()
            .par_chunks_mut(m)
            .zip(tau.data().par_chunks(m))
            .enumerate()
            .for_each(|(v, (o, t))| match coeffs.coefficient(v) {
                None => o.fill(0.0),
                Some(k) => {
                    let mut local = [0.0; crate::linalg::MAX_COMPONENTS];
                    k.mul_vec(t, &mut local[..m]);
                    for (o, l) in o.iter_mut().zip(&local[..m]) {
                        *o += l;
                    }
                }
            });
        Ok(out)
    }

    /// Right-hand side: `p` on masked-in voxels, zero elsewhere.
    pub fn rhs(&self, p: &[f64]) -> Result<VoxelField> {
        let m = self.components();
        if p.len() != m {
            return Err(Error::InvalidArgument(format!(
                "loading has {} components, expected {m}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loading".into()));
        }
        let mut f = VoxelField::zeros(*self.grid(), m);
        let coeffs = &self.coeffs;
        f.data_mut()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(v, c)| {
                if coeffs.is_masked_in(v) {
                    c.copy_from_slice(p);
                }
            });
        Ok(f)
    }

    /// Zeroes the components of `f` outside the mask.
    pub fn project(&self, f: &mut VoxelField) {
        let m = self.components();
        let coeffs = &self.coeffs;
        f.data_mut()
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(v, c)| {
                if !coeffs.is_masked_in(v) {
                    c.fill(0.0);
                }
            });
    }

    fn check_field(&self, tau: &VoxelField) -> Result<()> {
        if tau.grid() != self.grid() || tau.components() != self.components() {
            return Err(Error::InvalidArgument(
                "field does not match the system operator".into(),
            ));
        }
        if !tau.is_finite() {
            return Err(Error::NonFinite("polarization".into()));
        }
        Ok(())
    }

    pub fn assemble_dense(&self) -> Result<DenseSystem> {
        self.assemble_dense_with_limit(DENSE_LIMIT)
    }

    /// Explicit matrix over the masked-in unknowns. Block `(beta, gamma)` is
    /// `delta_{beta gamma} K_beta + Gamma_{beta - gamma}`, where the real-space
    /// kernel `Gamma_delta` is the inverse DFT of the symbol table.
    pub fn assemble_dense_with_limit(&self, limit: usize) -> Result<DenseSystem> {
        let m = self.components();
        let grid = *self.grid();
        let voxels: Vec<usize> = (0..grid.voxel_count())
            .filter(|&v| self.coeffs.is_masked_in(v))
            .collect();
        let rows = voxels.len() * m;
        if rows > limit {
            return Err(Error::DenseLimit { rows, limit });
        }
        let mm = m * m;
        let table = self.green.symbol_table();
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.voxel_count() * mm];
        for (k, sym) in table.iter().enumerate() {
            for a in 0..m {
                for b in 0..m {
                    spec[k * mm + a * m + b] = sym.get(a, b);
                }
            }
        }
        let kernel = dft_inverse(&SpectralField::from_vec(grid, mm, spec)?)?;
        let mut matrix = DMatrix::zeros(rows, rows);
        for (bi, &beta) in voxels.iter().enumerate() {
            let mb = grid.multi_index(beta);
            for (gi, &gamma) in voxels.iter().enumerate() {
                let mg = grid.multi_index(gamma);
                let delta: Vec<i64> = (0..grid.dim())
                    .map(|a| mb[a] as i64 - mg[a] as i64)
                    .collect();
                let g = kernel.voxel(grid.wrap_index(&delta));
                for a in 0..m {
                    for b in 0..m {
                        matrix[(bi * m + a, gi * m + b)] = g[a * m + b];
                    }
                }
            }
            let k = self.coeffs.coefficient(beta).expect("masked-in voxel");
            for a in 0..m {
                for b in 0..m {
                    matrix[(bi * m + a, bi * m + b)] += k.get(a, b);
                }
            }
        }
        Ok(DenseSystem {
            matrix,
            voxels,
            components: m,
            grid,
        })
    }
}

/// `Gamma * tau` for any field on the operator's grid.
pub fn apply_green_field(tau: &VoxelField, green: &GreenOperator) -> Result<VoxelField> {
    green.apply_field(tau)
}

pub fn apply_system(tau: &VoxelField, op: &SystemOperator) -> Result<VoxelField> {
    op.apply(tau)
}

pub fn rhs(p: &[f64], op: &SystemOperator) -> Result<VoxelField> {
    op.rhs(p)
}

pub fn assemble_dense(op: &SystemOperator) -> Result<DenseSystem> {
    op.assemble_dense()
}

/// Dense matrix of the system over the masked-in unknowns.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    /// Voxel of each block row.
    pub voxels: Vec<usize>,
    pub components: usize,
    pub grid: Grid,
}

impl DenseSystem {
    /// Unknown vector of a field (masked-in voxels only).
    pub fn gather(&self, f: &VoxelField) -> Vec<f64> {
        self.voxels
            .iter()
            .flat_map(|&v| f.voxel(v).iter().copied())
            .collect()
    }

    /// Field from an unknown vector, zero outside the mask.
    pub fn scatter(&self, x: &[f64]) -> VoxelField {
        let m = self.components;
        let mut f = VoxelField::zeros(self.grid, m);
        for (i, &v) in self.voxels.iter().enumerate() {
            f.voxel_mut(v).copy_from_slice(&x[i * m..(i + 1) * m]);
        }
        f
    }

    pub fn matvec(&self, f: &VoxelField) -> VoxelField {
        let x = nalgebra::DVector::from_vec(self.gather(f));
        let y = &self.matrix * x;
        self.scatter(y.as_slice())
    }

    /// Largest `|M - M^T|` relative to the largest `|M|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.matrix.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }
}
