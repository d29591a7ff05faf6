//! Fourier symbols of the discrete Green operators.
//!
//! The continuous symbol is `G0(k) = k k^T / (k^T A0 k)` for conduction and
//! the isotropic strain Green operator for elasticity; both vanish at `k = 0`
//! and are homogeneous of degree zero. Four discrete operators are built on
//! top of it:
//!
//! * `Consistent`: the Galerkin projection onto voxel-wise constant fields,
//!   `sum_n F(2 pi (k/N + n))^2 G0(k/N + n)` with the product-sinc weight `F`.
//!   The lattice series converges slowly; it is summed over a box and the two
//!   tails of every axis are lumped analytically, then cached per grid.
//! * `Truncated`: `G0` at the centered frequency, replaced by `A0^{-1}` on
//!   Nyquist frequencies so the symbol stays Hermitian-compatible.
//! * `Filtered`: `sum_{n in {-1,0}^d} G(2 pi (k/N + n))^2 G0(k/N + n)` with
//!   `G(K) = prod cos(K_i / 4)`.
//! * `FiniteDifference`: `V V^H / (V^H A0 V)` with `V_i = exp(2 i pi k_i/N) - 1`.
//!   For elasticity the same forward-difference vector replaces the wave
//!   vector in the displacement solve; this extension is experimental.
//!
//! Symbols are evaluated on the fly per frequency except for `Consistent`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::elasticity::{IsotropicStiffness, SymTensorCoords};
use crate::error::{Error, Result};
use crate::fft::{Direction, FftEngine};
use crate::grid::{centered_freq, real_part_checked, Grid, VoxelField};
use crate::linalg::{SmallCMat, SmallMat, MAX_COMPONENTS};
use crate::microstructure::{PhaseTensor, ReferenceMedium};

type C64 = Complex64;
const CZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Default box half-width of the consistent lattice series.
pub const CONSISTENT_N_MAX: usize = 4;
/// Default tolerance on the consistent series convergence estimate.
pub const CONSISTENT_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GreenKind {
    Consistent { n_max: usize, tol: f64 },
    Truncated,
    Filtered,
    FiniteDifference,
}

impl GreenKind {
    pub fn consistent() -> Self {
        GreenKind::Consistent {
            n_max: CONSISTENT_N_MAX,
            tol: CONSISTENT_TOL,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GreenKind::Consistent { .. } => "consistent",
            GreenKind::Truncated => "truncated",
            GreenKind::Filtered => "filtered",
            GreenKind::FiniteDifference => "fd",
        }
    }

    pub fn all() -> [GreenKind; 4] {
        [
            GreenKind::consistent(),
            GreenKind::Truncated,
            GreenKind::Filtered,
            GreenKind::FiniteDifference,
        ]
    }
}

impl fmt::Display for GreenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GreenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "consistent" => Ok(GreenKind::consistent()),
            "truncated" => Ok(GreenKind::Truncated),
            "filtered" => Ok(GreenKind::Filtered),
            "fd" => Ok(GreenKind::FiniteDifference),
            other => Err(Error::InvalidArgument(format!(
                "unknown Green operator '{other}' (expected consistent | truncated | filtered | fd)"
            ))),
        }
    }
}

/// Continuous symbol `k k^T / (k^T A0 k)` (zero at `k = 0`).
pub fn gamma_continuous(kappa: &[f64], a0: &DMatrix<f64>) -> DMatrix<f64> {
    let d = kappa.len();
    assert_eq!(a0.nrows(), d);
    let k = nalgebra::DVector::from_column_slice(kappa);
    let denom = (k.transpose() * a0 * &k)[(0, 0)];
    if k.iter().all(|&v| v == 0.0) {
        return DMatrix::zeros(d, d);
    }
    &k * k.transpose() / denom
}

/// Isotropic strain Green operator in tensor coordinates, `n = k/|k|`:
/// `(d_ih n_j n_l + d_il n_j n_h + d_jh n_i n_l + d_jl n_i n_h) / (4 mu0)
///  - (lambda0 + mu0) / (mu0 (lambda0 + 2 mu0)) n_i n_j n_h n_l`.
pub fn gamma_continuous_elastic(kappa: &[f64], stiffness: &IsotropicStiffness) -> DMatrix<f64> {
    let dim = kappa.len();
    let coords = SymTensorCoords::new(dim).expect("dimension 1..=3");
    let len = kappa.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len == 0.0 {
        return DMatrix::zeros(coords.len(), coords.len());
    }
    let n: Vec<f64> = kappa.iter().map(|v| v / len).collect();
    let (mu, lambda) = (stiffness.mu(), stiffness.lambda());
    let c = (lambda + mu) / (mu * (lambda + 2.0 * mu));
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    coords.fourth_order_matrix(|i, j, h, l| {
        (d(i, h) * n[j] * n[l]
            + d(i, l) * n[j] * n[h]
            + d(j, h) * n[i] * n[l]
            + d(j, l) * n[i] * n[h])
            / (4.0 * mu)
            - c * n[i] * n[j] * n[h] * n[l]
    })
}

/// Fast evaluator of the continuous symbol acting on complex coordinates.
#[derive(Clone, Debug)]
enum Continuous {
    Conduction { dim: usize, a0: [[f64; 3]; 3] },
    Elasticity { dim: usize, mu: f64, lambda: f64 },
}

/// Tensor index pairs of the coordinates, see [`SymTensorCoords`].
const PAIRS: [[(usize, usize); 6]; 3] = [
    [(0, 0), (0, 0), (0, 0), (0, 0), (0, 0), (0, 0)],
    [(0, 0), (1, 1), (0, 1), (0, 0), (0, 0), (0, 0)],
    [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)],
];

#[inline]
fn coords_to_tensor(dim: usize, x: &[C64]) -> [[C64; 3]; 3] {
    let mut t = [[CZERO; 3]; 3];
    for (a, &v) in x.iter().enumerate() {
        let (i, j) = PAIRS[dim - 1][a];
        let v = if i == j {
            v
        } else {
            v * std::f64::consts::FRAC_1_SQRT_2
        };
        t[i][j] = v;
        t[j][i] = v;
    }
    t
}

#[inline]
fn tensor_to_coords_acc(dim: usize, t: &[[C64; 3]; 3], w: f64, out: &mut [C64]) {
    for (a, o) in out.iter_mut().enumerate() {
        let (i, j) = PAIRS[dim - 1][a];
        let s = if i == j {
            1.0
        } else {
            std::f64::consts::SQRT_2
        };
        *o += t[i][j] * (w * s);
    }
}

impl Continuous {
    fn new(reference: &ReferenceMedium) -> Self {
        match reference {
            PhaseTensor::Conduction(m) => {
                let mut a0 = [[0.0; 3]; 3];
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        a0[i][j] = m[(i, j)];
                    }
                }
                Continuous::Conduction { dim: m.nrows(), a0 }
            }
            PhaseTensor::Elasticity { dim, stiffness } => Continuous::Elasticity {
                dim: *dim,
                mu: stiffness.mu(),
                lambda: stiffness.lambda(),
            },
        }
    }

    /// `out += w * G0(xi) x`; `xi` must be nonzero.
    #[inline]
    fn apply_acc(&self, xi: &[f64; 3], w: f64, x: &[C64], out: &mut [C64]) {
        match *self {
            Continuous::Conduction { dim, ref a0 } => {
                let mut denom = 0.0;
                let mut proj = CZERO;
                for i in 0..dim {
                    proj += x[i] * xi[i];
                    for j in 0..dim {
                        denom += xi[i] * a0[i][j] * xi[j];
                    }
                }
                let s = proj * (w / denom);
                for i in 0..dim {
                    out[i] += s * xi[i];
                }
            }
            Continuous::Elasticity { dim, mu, lambda } => {
                let len = xi[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
                let n = [xi[0] / len, xi[1] / len, xi[2] / len];
                let t = coords_to_tensor(dim, x);
                let mut tn = [CZERO; 3];
                for i in 0..dim {
                    for j in 0..dim {
                        tn[i] += t[i][j] * n[j];
                    }
                }
                let ntn: C64 = (0..dim).map(|i| tn[i] * n[i]).sum();
                let c = (lambda + mu) / (mu * (lambda + 2.0 * mu));
                let mut e = [[CZERO; 3]; 3];
                for i in 0..dim {
                    for j in 0..dim {
                        e[i][j] =
                            (tn[i] * n[j] + tn[j] * n[i]) * (0.5 / mu) - ntn * (c * n[i] * n[j]);
                    }
                }
                tensor_to_coords_acc(dim, &e, w, out);
            }
        }
    }

    fn components(&self) -> usize {
        match *self {
            Continuous::Conduction { dim, .. } => dim,
            Continuous::Elasticity { dim, .. } => dim * (dim + 1) / 2,
        }
    }

    /// `mat += w * G0(xi)`.
    fn matrix_acc(&self, xi: &[f64; 3], w: f64, mat: &mut SmallCMat) {
        let m = self.components();
        let mut e = [CZERO; MAX_COMPONENTS];
        for b in 0..m {
            e[b] = C64::new(1.0, 0.0);
            let mut col = [CZERO; MAX_COMPONENTS];
            self.apply_acc(xi, w, &e[..m], &mut col[..m]);
            for a in 0..m {
                mat.add_to(a, b, col[a]);
            }
            e[b] = CZERO;
        }
    }

    /// Finite-difference symbol applied to `x`, `out` overwritten.
    fn apply_fd(&self, v: &[C64; 3], x: &[C64], out: &mut [C64]) {
        out.fill(CZERO);
        match *self {
            Continuous::Conduction { dim, ref a0 } => {
                let mut denom = CZERO;
                let mut proj = CZERO;
                for i in 0..dim {
                    proj += v[i].conj() * x[i];
                    for j in 0..dim {
                        denom += v[i].conj() * a0[i][j] * v[j];
                    }
                }
                if denom.re == 0.0 {
                    return;
                }
                let s = proj / denom.re;
                for i in 0..dim {
                    out[i] = v[i] * s;
                }
            }
            Continuous::Elasticity { dim, mu, lambda } => {
                let vv: f64 = v[..dim].iter().map(|z| z.norm_sqr()).sum();
                if vv == 0.0 {
                    return;
                }
                // acoustic tensor K_ik = lambda conj(v_i) v_k + mu v_i conj(v_k) + mu |v|^2 d_ik
                let mut k = [[CZERO; 3]; 3];
                for i in 0..dim {
                    for l in 0..dim {
                        k[i][l] = v[i].conj() * v[l] * lambda + v[i] * v[l].conj() * mu;
                    }
                    k[i][i] += mu * vv;
                }
                let t = coords_to_tensor(dim, x);
                let mut rhs = [CZERO; 3];
                for i in 0..dim {
                    for j in 0..dim {
                        rhs[i] += t[i][j] * v[j].conj();
                    }
                }
                let u = solve_small(dim, k, rhs);
                let mut e = [[CZERO; 3]; 3];
                for i in 0..dim {
                    for j in 0..dim {
                        e[i][j] = (v[i] * u[j] + v[j] * u[i]) * 0.5;
                    }
                }
                tensor_to_coords_acc(dim, &e, 1.0, out);
            }
        }
    }
}

/// Gaussian elimination with partial pivoting on a `dim x dim` system.
fn solve_small(dim: usize, mut a: [[C64; 3]; 3], mut b: [C64; 3]) -> [C64; 3] {
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..dim {
            let f = a[r][col] / a[col][col];
            for c in col..dim {
                let t = a[col][c];
                a[r][c] -= f * t;
            }
            let t = b[col];
            b[r] -= f * t;
        }
    }
    let mut x = [CZERO; 3];
    for r in (0..dim).rev() {
        let mut s = b[r];
        for c in r + 1..dim {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

/// `sum_{j>=0} (z+j)^{-2}` and `sum_{j>=0} (z+j)^{-3}` for `z > 0`.
pub(crate) fn tail_sums(mut z: f64) -> (f64, f64) {
    let (mut s2, mut s3) = (0.0, 0.0);
    while z < 12.0 {
        s2 += 1.0 / (z * z);
        s3 += 1.0 / (z * z * z);
        z += 1.0;
    }
    let i = 1.0 / z;
    let i2 = i * i;
    // Euler-Maclaurin tails of the trigamma and tetragamma series.
    s2 += i
        * (1.0 + i * (0.5 + i * (1.0 / 6.0 + i2 * (-1.0 / 30.0 + i2 * (1.0 / 42.0 - i2 / 30.0)))));
    s3 += i2 * (0.5 + i * (0.5 + i * (0.25 + i2 * (-1.0 / 12.0 + i2 * (1.0 / 12.0 - i2 * 0.15)))));
    (s2, s3)
}

/// One-axis terms `(xi, weight)` of the consistent series at fractional
/// frequency `x`: the box `|n| <= n_max` plus one lumped term per tail. The
/// weights sum to one.
fn consistent_axis_terms(x: f64, n_max: usize, out: &mut Vec<(f64, f64)>) {
    out.clear();
    if (x - x.round()).abs() < 1e-14 {
        out.push((0.0, 1.0));
        return;
    }
    let s = (PI * x).sin().powi(2) / (PI * PI);
    let m = n_max as f64;
    for n in -(n_max as i64)..=(n_max as i64) {
        let xi = x + n as f64;
        out.push((xi, s / (xi * xi)));
    }
    let (r2, r3) = tail_sums(x + m + 1.0);
    out.push((r2 / r3, s * r2));
    let (l2, l3) = tail_sums(m + 1.0 - x);
    out.push((-l2 / l3, s * l2));
}

/// Reference medium data needed per frequency.
#[derive(Clone, Debug)]
pub struct GreenOperator {
    kind: GreenKind,
    reference: ReferenceMedium,
    grid: Grid,
    components: usize,
    continuous: Continuous,
    ref_inverse: SmallMat,
    cache: Option<Vec<SmallCMat>>,
    series_estimate: f64,
    engine: FftEngine,
}

impl GreenOperator {
    pub fn new(kind: GreenKind, reference: ReferenceMedium, grid: Grid) -> Result<Self> {
        if reference.dim() != grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "{}D reference medium on a {}D grid",
                reference.dim(),
                grid.dim()
            )));
        }
        if let GreenKind::Consistent { n_max, tol } = kind {
            if n_max < 1 || !(tol > 0.0) {
                return Err(Error::InvalidArgument(
                    "consistent series needs n_max >= 1 and tol > 0".into(),
                ));
            }
        }
        let components = reference.components();
        let mut op = GreenOperator {
            kind,
            continuous: Continuous::new(&reference),
            ref_inverse: SmallMat::from_dmatrix(&reference.inverse_matrix()),
            reference,
            grid,
            components,
            cache: None,
            series_estimate: 0.0,
            engine: FftEngine::new(&grid),
        };
        if let GreenKind::Consistent { n_max, tol } = kind {
            let (table, estimate) = op.consistent_table(n_max);
            if estimate > tol {
                return Err(Error::SeriesNotConverged {
                    estimate,
                    tolerance: tol,
                });
            }
            op.cache = Some(table);
            op.series_estimate = estimate;
        }
        Ok(op)
    }

    pub fn kind(&self) -> GreenKind {
        self.kind
    }

    pub fn reference(&self) -> &ReferenceMedium {
        &self.reference
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Convergence estimate of the consistent series (zero for other kinds).
    pub fn series_estimate(&self) -> f64 {
        self.series_estimate
    }

    fn consistent_table(&self, n_max: usize) -> (Vec<SmallCMat>, f64) {
        let g = self.grid;
        let scale = self.ref_inverse.max_abs();
        let results: Vec<(SmallCMat, f64)> = (0..g.voxel_count())
            .into_par_iter()
            .map(|lin| {
                let mi = g.multi_index(lin);
                let mut x = [0.0; 3];
                let mut nyquist = Vec::new();
                for a in 0..g.dim() {
                    let (c, nyq) = centered_freq(mi[a], g.side());
                    x[a] = c as f64 / g.side() as f64;
                    if nyq {
                        nyquist.push(a);
                    }
                }
                // x = +1/2 and -1/2 name the same frequency but truncate the
                // lattice asymmetrically; averaging keeps the table even in k.
                let count = 1usize << nyquist.len();
                let mut sym = SmallCMat::zeros(self.components);
                let mut est: f64 = 0.0;
                for signs in 0..count {
                    let mut xs = x;
                    for (bit, &a) in nyquist.iter().enumerate() {
                        if signs >> bit & 1 == 1 {
                            xs[a] = -xs[a];
                        }
                    }
                    let (s, e) = self.consistent_at(&xs[..g.dim()], n_max);
                    sym.scale_add(1.0 / count as f64, &s);
                    est = est.max(e);
                }
                (sym, est / scale)
            })
            .collect();
        let estimate = results.iter().map(|r| r.1).fold(0.0, f64::max);
        (results.into_iter().map(|r| r.0).collect(), estimate)
    }

    /// Consistent series at the fractional frequency `x` (any real vector,
    /// not reduced modulo 1), with the difference between box half-widths
    /// `n_max` and `n_max - 1` as a convergence estimate.
    pub fn consistent_at(&self, x: &[f64], n_max: usize) -> (SmallCMat, f64) {
        let full = self.consistent_partial(x, n_max);
        let coarse = self.consistent_partial(x, n_max.saturating_sub(1).max(1));
        let est = if n_max > 1 {
            full.max_abs_diff(&coarse)
        } else {
            full.max_abs()
        };
        (full, est)
    }

    fn consistent_partial(&self, x: &[f64], n_max: usize) -> SmallCMat {
        let dim = x.len();
        let mut axes: Vec<Vec<(f64, f64)>> = vec![Vec::new(); dim];
        for (a, terms) in axes.iter_mut().enumerate() {
            consistent_axis_terms(x[a], n_max, terms);
        }
        let mut mat = SmallCMat::zeros(self.components);
        let mut idx = [0usize; 3];
        loop {
            let mut xi = [0.0; 3];
            let mut w = 1.0;
            for a in 0..dim {
                let (p, q) = axes[a][idx[a]];
                xi[a] = p;
                w *= q;
            }
            if xi.iter().any(|&v| v != 0.0) && w != 0.0 {
                self.continuous.matrix_acc(&xi, w, &mut mat);
            }
            let mut a = 0;
            loop {
                if a == dim {
                    return mat;
                }
                idx[a] += 1;
                if idx[a] < axes[a].len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }

    /// Symbol at grid frequency `k` (entries in `0..N`).
    pub fn symbol(&self, k: &[usize]) -> SmallCMat {
        let lin = self.grid.index(k);
        self.symbol_lin(lin)
    }

    /// Symbol at the frequency with linear index `lin`.
    pub fn symbol_lin(&self, lin: usize) -> SmallCMat {
        let m = self.components;
        let mut mat = SmallCMat::zeros(m);
        let mut e = [CZERO; MAX_COMPONENTS];
        let mut col = [CZERO; MAX_COMPONENTS];
        for b in 0..m {
            e[b] = C64::new(1.0, 0.0);
            self.apply_at(lin, &e[..m], &mut col[..m]);
            for a in 0..m {
                mat.set(a, b, col[a]);
            }
            e[b] = CZERO;
        }
        mat
    }

    /// `out = symbol(lin) * x`.
    #[inline]
    pub fn apply_at(&self, lin: usize, x: &[C64], out: &mut [C64]) {
        let g = &self.grid;
        let dim = g.dim();
        let side = g.side();
        let mi = g.multi_index(lin);
        match self.kind {
            GreenKind::Consistent { .. } => {
                self.cache.as_ref().expect("consistent table")[lin].mul_vec(x, out);
            }
            GreenKind::Truncated => {
                out.fill(CZERO);
                let mut xi = [0.0; 3];
                let mut nyquist = false;
                for a in 0..dim {
                    let (f, ny) = centered_freq(mi[a], side);
                    xi[a] = f as f64;
                    nyquist |= ny;
                }
                if nyquist {
                    let m = self.components;
                    for i in 0..m {
                        out[i] = (0..m).map(|j| x[j] * self.ref_inverse.get(i, j)).sum();
                    }
                } else if lin != 0 {
                    self.continuous.apply_acc(&xi, 1.0, x, out);
                }
            }
            GreenKind::Filtered => {
                out.fill(CZERO);
                for corner in 0..(1usize << dim) {
                    let mut xi = [0.0; 3];
                    let mut w = 1.0;
                    for a in 0..dim {
                        // cos^2(pi/2 (k/N - 1)) = sin^2(pi k / 2N), exactly zero at k = 0
                        let t = 0.5 * PI * mi[a] as f64 / side as f64;
                        let base = mi[a] as f64 / side as f64;
                        if corner >> a & 1 == 1 {
                            xi[a] = base - 1.0;
                            w *= t.sin().powi(2);
                        } else {
                            xi[a] = base;
                            w *= t.cos().powi(2);
                        }
                    }
                    if xi[..dim].iter().any(|&v| v != 0.0) && w != 0.0 {
                        self.continuous.apply_acc(&xi, w, x, out);
                    }
                }
            }
            GreenKind::FiniteDifference => {
                let mut v = [CZERO; 3];
                for a in 0..dim {
                    v[a] = C64::from_polar(1.0, 2.0 * PI * mi[a] as f64 / side as f64) - 1.0;
                }
                self.continuous.apply_fd(&v, x, out);
            }
        }
    }

    /// Periodic convolution `Gamma * tau`: forward DFT, per-frequency symbol
    /// product, inverse DFT.
    pub fn apply_field(&self, tau: &VoxelField) -> Result<VoxelField> {
        let m = self.components;
        if tau.grid() != &self.grid || tau.components() != m {
            return Err(Error::InvalidArgument(
                "field does not match the Green operator".into(),
            ));
        }
        let mut data: Vec<C64> = tau.data().par_iter().map(|&v| C64::new(v, 0.0)).collect();
        let input = tau.data().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let floor = input * self.grid.voxel_count() as f64 * self.ref_inverse.max_abs();
        let mut scratch = Vec::new();
        self.engine
            .transform(&mut data, m, Direction::Forward, &mut scratch);
        data.par_chunks_mut(m).enumerate().for_each(|(lin, c)| {
            let mut x = [CZERO; MAX_COMPONENTS];
            x[..m].copy_from_slice(c);
            self.apply_at(lin, &x[..m], c);
        });
        self.engine
            .transform(&mut data, m, Direction::Inverse, &mut scratch);
        let real = real_part_checked(&data, 1.0 / self.grid.voxel_count() as f64, floor)?;
        VoxelField::from_vec(self.grid, m, real)
    }

    /// All symbols, indexed by frequency.
    pub fn symbol_table(&self) -> Vec<SmallCMat> {
        (0..self.grid.voxel_count())
            .into_par_iter()
            .map(|lin| self.symbol_lin(lin))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_sums_match_brute_force() {
        for &z in &[0.3, 1.7, 4.5, 25.0] {
            let (s2, s3) = tail_sums(z);
            let (mut b2, mut b3) = (0.0, 0.0);
            // remainder beyond the explicit terms, then small terms first
            let tail = 1.0 / (z + 2e6);
            b2 += tail + 0.5 * tail * tail;
            b3 += 0.5 * tail * tail + 0.5 * tail * tail * tail;
            for j in (0..2_000_000).rev() {
                let t = z + j as f64;
                b2 += 1.0 / (t * t);
                b3 += 1.0 / (t * t * t);
            }
            assert!((s2 - b2).abs() < 1e-11 * b2, "s2({z}) {s2} vs {b2}");
            assert!((s3 - b3).abs() < 1e-11 * b3, "s3({z}) {s3} vs {b3}");
        }
    }

    #[test]
    fn axis_weights_sum_to_one() {
        let mut terms = Vec::new();
        for &x in &[0.1, 0.25, -0.4, 0.5, 1.3] {
            consistent_axis_terms(x, 3, &mut terms);
            let total: f64 = terms.iter().map(|t| t.1).sum();
            assert!((total - 1.0).abs() < 1e-13, "x={x}: {total}");
        }
    }

    #[test]
    fn small_solve() {
        let a = [
            [C64::new(2.0, 0.0), C64::new(0.0, 1.0), CZERO],
            [C64::new(0.0, -1.0), C64::new(3.0, 0.0), CZERO],
            [CZERO, CZERO, C64::new(1.0, 0.0)],
        ];
        let b = [C64::new(1.0, 0.0), C64::new(0.0, 2.0), C64::new(5.0, 0.0)];
        let x = solve_small(3, a, b);
        for i in 0..3 {
            let r: C64 = (0..3).map(|j| a[i][j] * x[j]).sum::<C64>() - b[i];
            assert!(r.norm() < 1e-14);
        }
    }

    #[test]
    fn parses_variant_names() {
        assert_eq!(
            "fd".parse::<GreenKind>().unwrap(),
            GreenKind::FiniteDifference
        );
        assert_eq!(
            "Filtered".parse::<GreenKind>().unwrap(),
            GreenKind::Filtered
        );
        assert!("fem".parse::<GreenKind>().is_err());
    }
}
