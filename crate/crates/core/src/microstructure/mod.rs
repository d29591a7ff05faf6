//! Phase tensors, voxelized microstructures and the per-voxel coefficient
//! data of the discrete system.

mod packing;

pub use packing::{generate_hard_spheres, periodic_distance, PackingParams, SpherePack};

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::elasticity::{IsotropicStiffness, SymTensorCoords};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{symmetric_eigenvalues, symmetric_inverse, SmallMat};

/// Default contrast floor, relative to the largest eigenvalue of `A0`.
pub const DEFAULT_CONTRAST_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Physics {
    Conduction,
    Elasticity,
}

impl Physics {
    /// Unknowns per voxel: `d` for conduction, `d(d+1)/2` for elasticity.
    pub fn components(&self, dim: usize) -> usize {
        match self {
            Physics::Conduction => dim,
            Physics::Elasticity => dim * (dim + 1) / 2,
        }
    }
}

/// Coefficient of one phase: a conductivity matrix or an isotropic stiffness.
#[derive(Clone, Debug, PartialEq)]
pub enum PhaseTensor {
    Conduction(DMatrix<f64>),
    Elasticity {
        dim: usize,
        stiffness: IsotropicStiffness,
    },
}

/// The reference medium has the same shape as any phase coefficient.
pub type ReferenceMedium = PhaseTensor;

impl PhaseTensor {
    /// Symmetric positive definite conductivity.
    pub fn conduction(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || d > 3 || matrix.ncols() != d {
            return Err(Error::InvalidArgument(
                "conductivity must be a square 1x1..3x3 matrix".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conductivity".into()));
        }
        if matrix != matrix.transpose() {
            return Err(Error::InvalidArgument(
                "conductivity is not symmetric".into(),
            ));
        }
        let lo = symmetric_eigenvalues(&matrix)[0];
        if lo <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "conductivity not positive definite (eigenvalue {lo})"
            )));
        }
        Ok(PhaseTensor::Conduction(matrix))
    }

    pub fn isotropic_conduction(dim: usize, a: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        Self::conduction(DMatrix::identity(dim, dim) * a)
    }

    pub fn elasticity(dim: usize, mu: f64, nu: f64) -> Result<Self> {
        SymTensorCoords::new(dim)?;
        Ok(PhaseTensor::Elasticity {
            dim,
            stiffness: IsotropicStiffness::new(mu, nu)?,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            PhaseTensor::Conduction(m) => m.nrows(),
            PhaseTensor::Elasticity { dim, .. } => *dim,
        }
    }

    pub fn physics(&self) -> Physics {
        match self {
            PhaseTensor::Conduction(_) => Physics::Conduction,
            PhaseTensor::Elasticity { .. } => Physics::Elasticity,
        }
    }

    pub fn components(&self) -> usize {
        self.physics().components(self.dim())
    }

    /// The operator as an `m x m` symmetric matrix (tensor coordinates for
    /// elasticity).
    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            PhaseTensor::Conduction(m) => m.clone(),
            PhaseTensor::Elasticity { dim, stiffness } => stiffness.matrix(*dim),
        }
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        symmetric_inverse(&self.matrix()).expect("phase tensors are positive definite")
    }

    pub fn is_compatible(&self, other: &PhaseTensor) -> bool {
        self.physics() == other.physics() && self.dim() == other.dim()
    }
}

/// Phase map on a reference grid plus the coefficient of each phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Microstructure {
    grid: Grid,
    phases: Vec<u8>,
    catalog: Vec<PhaseTensor>,
}

impl Microstructure {
    pub fn new(grid: Grid, phases: Vec<u8>, catalog: Vec<PhaseTensor>) -> Result<Self> {
        if catalog.is_empty() || catalog.len() > 256 {
            return Err(Error::InvalidArgument(
                "phase catalog must hold 1..=256 entries".into(),
            ));
        }
        if phases.len() != grid.voxel_count() {
            return Err(Error::InvalidArgument(format!(
                "{} phase indices for {} voxels",
                phases.len(),
                grid.voxel_count()
            )));
        }
        if let Some(bad) = catalog
            .iter()
            .find(|t| !t.is_compatible(&catalog[0]) || t.dim() != grid.dim())
        {
            return Err(Error::InvalidArgument(format!(
                "phase tensor {:?}/{}D incompatible with {}D grid",
                bad.physics(),
                bad.dim(),
                grid.dim()
            )));
        }
        if let Some(&p) = phases.iter().find(|&&p| p as usize >= catalog.len()) {
            return Err(Error::InvalidArgument(format!(
                "phase index {p} not in catalog"
            )));
        }
        Ok(Microstructure {
            grid,
            phases,
            catalog,
        })
    }

    pub fn uniform(grid: Grid, tensor: PhaseTensor) -> Result<Self> {
        Self::new(grid, vec![0; grid.voxel_count()], vec![tensor])
    }

    /// Two layers normal to `axis`: phase 0 on the first half, phase 1 on the
    /// second.
    pub fn laminate(grid: Grid, axis: usize, catalog: Vec<PhaseTensor>) -> Result<Self> {
        if axis >= grid.dim() {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
        }
        let half = grid.side() / 2;
        let phases = (0..grid.voxel_count())
            .map(|v| (grid.multi_index(v)[axis] >= half) as u8)
            .collect();
        Self::new(grid, phases, catalog)
    }

    /// Periodic 2x2 checkerboard in the first two axes.
    pub fn checkerboard(grid: Grid, catalog: Vec<PhaseTensor>) -> Result<Self> {
        if grid.dim() < 2 {
            return Err(Error::InvalidArgument(
                "checkerboard needs at least two dimensions".into(),
            ));
        }
        let half = grid.side() / 2;
        let phases = (0..grid.voxel_count())
            .map(|v| {
                let mi = grid.multi_index(v);
                ((mi[0] >= half) ^ (mi[1] >= half)) as u8
            })
            .collect();
        Self::new(grid, phases, catalog)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phases(&self) -> &[u8] {
        &self.phases
    }

    pub fn catalog(&self) -> &[PhaseTensor] {
        &self.catalog
    }

    pub fn physics(&self) -> Physics {
        self.catalog[0].physics()
    }

    pub fn components(&self) -> usize {
        self.catalog[0].components()
    }

    /// Voxel count of each catalog phase over the total.
    pub fn volume_fractions(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.catalog.len()];
        for &p in &self.phases {
            counts[p as usize] += 1;
        }
        let total = self.phases.len() as f64;
        counts.into_iter().map(|c| c as f64 / total).collect()
    }

    /// Arithmetic (Voigt) and harmonic (Reuss) averages of the phase
    /// matrices, weighted by volume fraction.
    pub fn voigt_reuss(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.components();
        let mut voigt = DMatrix::zeros(m, m);
        let mut compliance = DMatrix::zeros(m, m);
        for (f, t) in self.volume_fractions().iter().zip(&self.catalog) {
            if *f > 0.0 {
                voigt += t.matrix() * *f;
                compliance += t.inverse_matrix() * *f;
            }
        }
        let reuss =
            symmetric_inverse(&compliance).expect("compliance average is positive definite");
        (voigt, reuss)
    }
}

/// Binary microstructure from a sphere pack: a voxel of the `side^3` grid
/// gets phase 1 when its center is within the radius of a sphere center
/// (periodic distance), else phase 0.
pub fn voxelize(
    pack: &SpherePack,
    side: usize,
    catalog: Vec<PhaseTensor>,
) -> Result<Microstructure> {
    let grid = Grid::new(3, side)?;
    if catalog.len() < 2 && !pack.centers().is_empty() {
        return Err(Error::InvalidArgument(
            "catalog needs a matrix and an inclusion phase".into(),
        ));
    }
    let n = side;
    let h = 1.0 / n as f64;
    let r = pack.radius();
    let r2 = r * r;
    let span = (r * n as f64).ceil() as i64 + 1;
    let mut phases = vec![0u8; grid.voxel_count()];
    phases
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(k, slab)| {
            let zc = (k as f64 + 0.5) * h;
            for c in pack.centers() {
                let dz = wrap_delta(zc - c[2]);
                if dz.abs() > r {
                    continue;
                }
                let ci = (c[0] * n as f64).floor() as i64;
                let cj = (c[1] * n as f64).floor() as i64;
                for dj in -span..=span {
                    let j = (cj + dj).rem_euclid(n as i64) as usize;
                    let dy = wrap_delta((j as f64 + 0.5) * h - c[1]);
                    if dy * dy + dz * dz > r2 {
                        continue;
                    }
                    for di in -span..=span {
                        let i = (ci + di).rem_euclid(n as i64) as usize;
                        let dx = wrap_delta((i as f64 + 0.5) * h - c[0]);
                        if dx * dx + dy * dy + dz * dz <= r2 {
                            slab[j * n + i] = 1;
                        }
                    }
                }
            }
        });
    Microstructure::new(grid, phases, catalog)
}

/// Minimum-image difference in a unit period.
#[inline]
pub(crate) fn wrap_delta(d: f64) -> f64 {
    d - d.round()
}

/// Per-voxel `(A_beta^h - A0)^{-1}` on a solve grid, plus the mask of voxels
/// carrying unknowns.
///
/// Distinct coefficients are stored once in a palette; each voxel holds a
/// palette index or [`CoefficientField::MASKED_OUT`].
#[derive(Clone, Debug)]
pub struct CoefficientField {
    grid: Grid,
    components: usize,
    reference: ReferenceMedium,
    palette: Vec<SmallMat>,
    index: Vec<u32>,
}

impl CoefficientField {
    pub const MASKED_OUT: u32 = u32::MAX;

    /// Builds a field from explicit per-voxel coefficients (`None` marks a
    /// masked-out voxel).
    pub fn from_voxels(
        grid: Grid,
        reference: ReferenceMedium,
        voxels: Vec<Option<SmallMat>>,
    ) -> Result<Self> {
        let m = reference.components();
        if voxels.len() != grid.voxel_count() || grid.dim() != reference.dim() {
            return Err(Error::InvalidArgument(
                "coefficient count does not match grid".into(),
            ));
        }
        let mut palette = Vec::new();
        let mut lookup: HashMap<Vec<u64>, u32> = HashMap::new();
        let mut index = Vec::with_capacity(voxels.len());
        for v in voxels {
            match v {
                None => index.push(Self::MASKED_OUT),
                Some(k) => {
                    if k.dim() != m {
                        return Err(Error::InvalidArgument("coefficient size mismatch".into()));
                    }
                    let key: Vec<u64> = (0..m * m).map(|e| k.get(e / m, e % m).to_bits()).collect();
                    let id = *lookup.entry(key).or_insert_with(|| {
                        palette.push(k);
                        (palette.len() - 1) as u32
                    });
                    index.push(id);
                }
            }
        }
        Ok(CoefficientField {
            grid,
            components: m,
            reference,
            palette,
            index,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn reference(&self) -> &ReferenceMedium {
        &self.reference
    }

    pub fn palette(&self) -> &[SmallMat] {
        &self.palette
    }

    #[inline]
    pub fn is_masked_in(&self, voxel: usize) -> bool {
        self.index[voxel] != Self::MASKED_OUT
    }

    #[inline]
    pub fn palette_index(&self, voxel: usize) -> u32 {
        self.index[voxel]
    }

    pub fn coefficient(&self, voxel: usize) -> Option<&SmallMat> {
        match self.index[voxel] {
            Self::MASKED_OUT => None,
            i => Some(&self.palette[i as usize]),
        }
    }

    /// Number of voxels in the mask.
    pub fn masked_in_count(&self) -> usize {
        self.index
            .iter()
            .filter(|&&i| i != Self::MASKED_OUT)
            .count()
    }

    /// Per-voxel `K_beta tau_beta`, zero outside the mask.
    pub fn apply_local(&self, tau: &[f64], out: &mut [f64]) {
        let m = self.components;
        out.par_chunks_mut(m)
            .zip(tau.par_chunks(m))
            .zip(self.index.par_iter())
            .for_each(|((o, t), &id)| {
                if id == Self::MASKED_OUT {
                    o.fill(0.0);
                } else {
                    self.palette[id as usize].mul_vec(t, o);
                }
            });
    }

    /// `A_beta^h - A0` for each palette entry.
    pub fn inverse_palette(&self) -> Result<Vec<SmallMat>> {
        self.palette
            .iter()
            .enumerate()
            .map(|(i, k)| {
                symmetric_inverse(&k.to_dmatrix())
                    .map(|inv| SmallMat::from_dmatrix(&inv))
                    .ok_or_else(|| {
                        let voxel = self
                            .index
                            .iter()
                            .position(|&id| id as usize == i)
                            .unwrap_or(0);
                        Error::SingularCoefficient(voxel)
                    })
            })
            .collect()
    }

    /// Largest spectral norm over the palette.
    pub fn max_spectral_norm(&self) -> f64 {
        self.palette
            .iter()
            .map(|k| {
                symmetric_eigenvalues(&k.to_dmatrix())
                    .iter()
                    .fold(0.0f64, |a, v| a.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }
}

/// Coefficients on a solve grid of side `side` (dividing the reference side),
/// with the default contrast floor.
pub fn build_coefficients(
    micro: &Microstructure,
    reference: &ReferenceMedium,
    side: usize,
) -> Result<CoefficientField> {
    let scale = symmetric_eigenvalues(&reference.matrix())
        .last()
        .copied()
        .unwrap_or(1.0);
    build_coefficients_with_floor(micro, reference, side, DEFAULT_CONTRAST_FLOOR * scale)
}

/// Coefficients on a solve grid of side `side`.
///
/// `K_beta` is the average over the fine voxels inside coarse voxel `beta`
/// of `(A_phase - A0)^{-1}`. A coarse voxel is in the mask only when none of
/// its fine voxels carries a phase equal to `A0`. Every phase different from
/// `A0` must have `|eig(A_phase - A0)| >= floor`.
pub fn build_coefficients_with_floor(
    micro: &Microstructure,
    reference: &ReferenceMedium,
    side: usize,
    floor: f64,
) -> Result<CoefficientField> {
    let fine = *micro.grid();
    if !reference.is_compatible(&micro.catalog[0]) {
        return Err(Error::InvalidArgument(
            "reference medium incompatible with phases".into(),
        ));
    }
    if side < 2 || !fine.side().is_multiple_of(side) {
        return Err(Error::InvalidArgument(format!(
            "solve side {side} does not divide reference side {}",
            fine.side()
        )));
    }
    let grid = Grid::new(fine.dim(), side)?;
    let a0 = reference.matrix();
    let n_phases = micro.catalog.len();

    // (A_p - A0)^{-1}, or None where A_p = A0.
    let present: Vec<bool> = micro.volume_fractions().iter().map(|&f| f > 0.0).collect();
    let mut phase_inv: Vec<Option<SmallMat>> = Vec::with_capacity(n_phases);
    for (p, t) in micro.catalog.iter().enumerate() {
        let diff = t.matrix() - &a0;
        if diff.iter().all(|&v| v == 0.0) {
            phase_inv.push(None);
            continue;
        }
        let gap = symmetric_eigenvalues(&diff)
            .iter()
            .fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if gap < floor {
            if present[p] {
                return Err(Error::ContrastBound {
                    phase: p,
                    gap,
                    floor,
                });
            }
            phase_inv.push(None);
            continue;
        }
        let inv = symmetric_inverse(&diff).ok_or(Error::ContrastBound {
            phase: p,
            gap,
            floor,
        })?;
        phase_inv.push(Some(SmallMat::from_dmatrix(&inv)));
    }

    let ratio = fine.side() / side;
    let m = reference.components();
    let voxels: Vec<Option<SmallMat>> = if ratio == 1 {
        micro
            .phases
            .par_iter()
            .map(|&p| phase_inv[p as usize])
            .collect()
    } else {
        let per_cell = ratio.pow(fine.dim() as u32);
        let weight = 1.0 / per_cell as f64;
        (0..grid.voxel_count())
            .into_par_iter()
            .map(|v| {
                let base = grid.multi_index(v);
                let mut counts = vec![0u32; n_phases];
                for off in 0..per_cell {
                    let mut fi = [0usize; 3];
                    let mut rest = off;
                    for a in 0..fine.dim() {
                        fi[a] = base[a] * ratio + rest % ratio;
                        rest /= ratio;
                    }
                    counts[micro.phases[fine.index(&fi)] as usize] += 1;
                }
                let mut k = SmallMat::zeros(m);
                for (p, &c) in counts.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    match &phase_inv[p] {
                        None => return None,
                        Some(inv) => k.scale_add(c as f64 * weight, inv),
                    }
                }
                symmetrize(&mut k);
                Some(k)
            })
            .collect()
    };
    CoefficientField::from_voxels(grid, reference.clone(), voxels)
}

fn symmetrize(k: &mut SmallMat) {
    let m = k.dim();
    for i in 0..m {
        for j in i + 1..m {
            let v = 0.5 * (k.get(i, j) + k.get(j, i));
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64) -> PhaseTensor {
        PhaseTensor::isotropic_conduction(1, a).unwrap()
    }

    #[test]
    fn uniform_double_reference_gives_identity() {
        let g = Grid::new(2, 4).unwrap();
        let a0 = PhaseTensor::isotropic_conduction(2, 1.0).unwrap();
        let micro =
            Microstructure::uniform(g, PhaseTensor::isotropic_conduction(2, 2.0).unwrap()).unwrap();
        let coeffs = build_coefficients(&micro, &a0, 4).unwrap();
        assert_eq!(coeffs.masked_in_count(), 16);
        for v in 0..16 {
            assert_eq!(coeffs.coefficient(v).unwrap(), &SmallMat::identity(2));
        }
    }

    #[test]
    fn uniform_reference_medium_is_masked_out() {
        let g = Grid::new(2, 4).unwrap();
        let a0 = PhaseTensor::isotropic_conduction(2, 1.0).unwrap();
        let micro = Microstructure::uniform(g, a0.clone()).unwrap();
        let coeffs = build_coefficients(&micro, &a0, 2).unwrap();
        assert_eq!(coeffs.masked_in_count(), 0);
    }

    #[test]
    fn half_and_half_average_of_inverses() {
        // a = 4 and a = 2 against A0 = 1: (1/3 + 1/1) / 2 = 2/3.
        let g = Grid::new(1, 2).unwrap();
        let micro = Microstructure::new(g, vec![0, 1], vec![scalar(4.0), scalar(2.0)]).unwrap();
        let coeffs = build_coefficients(&micro, &scalar(1.0), 2).unwrap();
        assert_eq!(coeffs.coefficient(0).unwrap().get(0, 0), 1.0 / 3.0);
        let g = Grid::new(1, 4).unwrap();
        let micro =
            Microstructure::new(g, vec![0, 1, 0, 1], vec![scalar(4.0), scalar(2.0)]).unwrap();
        let coeffs = build_coefficients(&micro, &scalar(1.0), 2).unwrap();
        assert!((coeffs.coefficient(0).unwrap().get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(coeffs.palette().len(), 1);
    }

    #[test]
    fn straddling_voxel_is_masked_out() {
        let g = Grid::new(1, 4).unwrap();
        let micro =
            Microstructure::new(g, vec![0, 1, 1, 1], vec![scalar(1.0), scalar(3.0)]).unwrap();
        let coeffs = build_coefficients(&micro, &scalar(1.0), 2).unwrap();
        assert!(!coeffs.is_masked_in(0));
        assert!(coeffs.is_masked_in(1));
        assert_eq!(coeffs.coefficient(1).unwrap().get(0, 0), 0.5);
    }

    #[test]
    fn contrast_bound_violation_names_phase() {
        let g = Grid::new(1, 2).unwrap();
        let micro =
            Microstructure::new(g, vec![0, 1], vec![scalar(2.0), scalar(1.0 + 1e-12)]).unwrap();
        match build_coefficients(&micro, &scalar(1.0), 2) {
            Err(Error::ContrastBound { phase, .. }) => assert_eq!(phase, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn side_must_divide_reference() {
        let g = Grid::new(1, 6).unwrap();
        let micro = Microstructure::uniform(g, scalar(2.0)).unwrap();
        assert!(build_coefficients(&micro, &scalar(1.0), 4).is_err());
    }

    #[test]
    fn voxelize_single_sphere_examples() {
        let cat = vec![scalar3(1.0), scalar3(2.0)];
        let pack = SpherePack::from_centers(vec![[0.5, 0.5, 0.5]], 0.26, 0.0, 0).unwrap();
        let micro = voxelize(&pack, 2, cat.clone()).unwrap();
        assert!(micro.phases().iter().all(|&p| p == 0));
        let pack = SpherePack::from_centers(vec![[0.5, 0.5, 0.5]], 0.45, 0.0, 0).unwrap();
        let micro = voxelize(&pack, 2, cat.clone()).unwrap();
        assert!(micro.phases().iter().all(|&p| p == 1));
        let empty = SpherePack::from_centers(vec![], 0.1, 0.0, 0).unwrap();
        let micro = voxelize(&empty, 4, cat).unwrap();
        assert!(micro.phases().iter().all(|&p| p == 0));
    }

    #[test]
    fn voxelize_wraps_periodically() {
        let cat = vec![scalar3(1.0), scalar3(2.0)];
        let pack = SpherePack::from_centers(vec![[0.0, 0.0, 0.0]], 0.2, 0.0, 0).unwrap();
        let micro = voxelize(&pack, 8, cat).unwrap();
        let g = micro.grid();
        for corner in [[0, 0, 0], [7, 0, 0], [0, 7, 7], [7, 7, 7]] {
            assert_eq!(micro.phases()[g.index(&corner)], 1);
        }
        assert_eq!(micro.phases()[g.index(&[4, 4, 4])], 0);
    }

    fn scalar3(a: f64) -> PhaseTensor {
        PhaseTensor::isotropic_conduction(3, a).unwrap()
    }
}
