//! Linear elasticity support: orthonormal coordinates for symmetric tensors,
//! isotropic stiffness algebra and shear loadings.
//!
//! Symmetric `d x d` tensors map to vectors of length `d(d+1)/2`: diagonal
//! entries first, then off-diagonal entries scaled by `sqrt(2)` in the order
//! (for `d = 3`) `23, 13, 12`. The map is an isometry for the Frobenius
//! product, so fourth-order tensors with minor symmetries become plain
//! symmetric matrices and double contractions become dot products.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Coordinate map between symmetric tensors and vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymTensorCoords {
    dim: usize,
}

impl SymTensorCoords {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimension {dim} not in 1..=3"
            )));
        }
        Ok(SymTensorCoords { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coordinates, `d(d+1)/2`.
    pub fn len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tensor index pair of coordinate `a`.
    pub fn pair(&self, a: usize) -> (usize, usize) {
        const P1: [(usize, usize); 1] = [(0, 0)];
        const P2: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
        const P3: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
        match self.dim {
            1 => P1[a],
            2 => P2[a],
            _ => P3[a],
        }
    }

    /// Coordinate holding tensor entry `(i, j)`.
    pub fn coord_of(&self, i: usize, j: usize) -> usize {
        (0..self.len())
            .find(|&a| {
                let (p, q) = self.pair(a);
                (p, q) == (i, j) || (q, p) == (i, j)
            })
            .expect("index pair in range")
    }

    /// Scale factor of coordinate `a`: 1 on the diagonal, `sqrt(2)` off it.
    #[inline]
    pub fn weight(&self, a: usize) -> f64 {
        let (i, j) = self.pair(a);
        if i == j {
            1.0
        } else {
            SQRT2
        }
    }

    pub fn to_coords(&self, tensor: &DMatrix<f64>) -> Result<Vec<f64>> {
        if tensor.nrows() != self.dim || tensor.ncols() != self.dim {
            return Err(Error::InvalidArgument(
                "tensor shape does not match dimension".into(),
            ));
        }
        let asym = (tensor - tensor.transpose()).amax();
        if asym > 1e-14 * tensor.amax().max(1.0) {
            return Err(Error::InvalidArgument("tensor is not symmetric".into()));
        }
        Ok((0..self.len())
            .map(|a| {
                let (i, j) = self.pair(a);
                self.weight(a) * tensor[(i, j)]
            })
            .collect())
    }

    pub fn from_coords(&self, coords: &[f64]) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.dim, self.dim);
        for (a, &v) in coords.iter().enumerate().take(self.len()) {
            let (i, j) = self.pair(a);
            let x = v / self.weight(a);
            t[(i, j)] = x;
            t[(j, i)] = x;
        }
        t
    }

    /// Matrix of a fourth-order tensor with minor symmetries, given entrywise.
    pub fn fourth_order_matrix<F>(&self, entry: F) -> DMatrix<f64>
    where
        F: Fn(usize, usize, usize, usize) -> f64,
    {
        let n = self.len();
        DMatrix::from_fn(n, n, |a, b| {
            let (i, j) = self.pair(a);
            let (k, l) = self.pair(b);
            self.weight(a) * self.weight(b) * entry(i, j, k, l)
        })
    }
}

/// Isotropic stiffness `sigma = lambda tr(eps) I + 2 mu eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsotropicStiffness {
    mu: f64,
    nu: f64,
}

impl IsotropicStiffness {
    /// Requires `mu > 0` and `-1 < nu < 1/2`, which is exactly positive
    /// definiteness on symmetric tensors.
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "shear modulus {mu} must be positive"
            )));
        }
        if !(nu > -1.0 && nu < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "Poisson ratio {nu} outside (-1, 1/2)"
            )));
        }
        Ok(IsotropicStiffness { mu, nu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda(&self) -> f64 {
        2.0 * self.mu * self.nu / (1.0 - 2.0 * self.nu)
    }

    /// Entry `C_ijkl`.
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        self.lambda() * d(i, j) * d(k, l) + self.mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
    }

    /// Stiffness as a matrix in tensor coordinates.
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        let coords = SymTensorCoords { dim };
        let n = coords.len();
        let lambda = self.lambda();
        DMatrix::from_fn(n, n, |a, b| {
            let diag_a = a < dim;
            let diag_b = b < dim;
            let mut v = if diag_a && diag_b { lambda } else { 0.0 };
            if a == b {
                v += 2.0 * self.mu;
            }
            v
        })
    }

    /// Stress coordinates for strain coordinates.
    pub fn apply(&self, dim: usize, strain: &[f64]) -> Vec<f64> {
        let trace: f64 = strain[..dim].iter().sum();
        strain
            .iter()
            .enumerate()
            .map(|(a, &e)| 2.0 * self.mu * e + if a < dim { self.lambda() * trace } else { 0.0 })
            .collect()
    }
}

/// Unit shear strain in the plane of axes `i != j`: the symmetric tensor with
/// ones at `(i, j)` and `(j, i)`, in coordinates.
pub fn shear_loading(dim: usize, i: usize, j: usize) -> Result<Vec<f64>> {
    if i >= dim || j >= dim || i == j {
        return Err(Error::InvalidArgument(format!(
            "({i}, {j}) is not a shear plane in {dim}D"
        )));
    }
    let coords = SymTensorCoords::new(dim)?;
    let mut t = DMatrix::zeros(dim, dim);
    t[(i, j)] = 1.0;
    t[(j, i)] = 1.0;
    coords.to_coords(&t)
}

/// Double contraction `p : A : p`, computed as `p^T A p` in coordinates.
pub fn project_component(tensor: &DMatrix<f64>, p: &[f64]) -> f64 {
    let n = p.len();
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            acc += p[a] * tensor[(a, b)] * p[b];
        }
    }
    acc
}
