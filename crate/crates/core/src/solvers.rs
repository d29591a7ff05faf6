//! Iterative solvers for the discrete system and homogenized coefficients.
//!
//! Both solvers work in the `h^d`-weighted inner product, start from
//! `tau = 0` and stop on the relative residual
//! `|K tau + Gamma * tau - p| / |p|` of the full system.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::grid::VoxelField;
use crate::linalg::{axpy, SmallMat, MAX_COMPONENTS};
use crate::microstructure::{Physics, ReferenceMedium};
use crate::operator::SystemOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    ConjugateGradient,
    FixedPoint,
}

impl SolverKind {
    pub fn label(&self) -> &'static str {
        match self {
            SolverKind::ConjugateGradient => "cg",
            SolverKind::FixedPoint => "fixed-point",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cg" => Ok(SolverKind::ConjugateGradient),
            "fixed-point" | "fixed_point" | "fp" => Ok(SolverKind::FixedPoint),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver '{other}' (expected cg | fixed-point)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveConfig {
    pub solver: SolverKind,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            solver: SolverKind::ConjugateGradient,
            rel_tol: 1e-5,
            max_iter: 1000,
        }
    }
}

impl SolveConfig {
    pub fn new(solver: SolverKind, rel_tol: f64, max_iter: usize) -> Result<Self> {
        let cfg = SolveConfig {
            solver,
            rel_tol,
            max_iter,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol {} not in (0, 1)",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub side: usize,
    pub variant: String,
    pub solver: SolverKind,
    pub iterations: usize,
    /// Relative residual after each iteration.
    pub residual_history: Vec<f64>,
    /// Final relative residual, recomputed from the operator.
    pub residual: f64,
    pub wall_time: f64,
    pub converged: bool,
    /// `A*_h p`.
    pub column: Vec<f64>,
}

impl SolveReport {
    pub fn csv_header(components: usize) -> String {
        let mut s = String::from("N,variant,solver,iterations,wall_time_s,residual");
        for a in 0..components {
            s.push_str(&format!(",a{a}"));
        }
        s
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{:.6e},{:.6e}",
            self.side, self.variant, self.solver, self.iterations, self.wall_time, self.residual
        );
        for v in &self.column {
            s.push_str(&format!(",{v:.12e}"));
        }
        s
    }
}

pub fn solve(
    op: &SystemOperator,
    p: &[f64],
    cfg: &SolveConfig,
) -> Result<(VoxelField, SolveReport)> {
    match cfg.solver {
        SolverKind::ConjugateGradient => solve_cg(op, p, cfg),
        SolverKind::FixedPoint => solve_fixed_point(op, p, cfg),
    }
}

fn weighted_norm(f: &VoxelField) -> f64 {
    f.norm()
}

fn relative_residual(
    op: &SystemOperator,
    tau: &VoxelField,
    b: &VoxelField,
    bnorm: f64,
) -> Result<f64> {
    let mut r = op.apply_unchecked(tau)?;
    axpy(-1.0, b.data(), r.data_mut());
    Ok(weighted_norm(&r) / bnorm)
}

fn trivial_report(
    op: &SystemOperator,
    p: &[f64],
    cfg: &SolveConfig,
    start: Instant,
) -> (VoxelField, SolveReport) {
    let tau = VoxelField::zeros(*op.grid(), op.components());
    let column = homogenized_column(&tau, p, op.coeffs().reference());
    let report = SolveReport {
        side: op.grid().side(),
        variant: op.green().kind().label().into(),
        solver: cfg.solver,
        iterations: 0,
        residual_history: Vec::new(),
        residual: 0.0,
        wall_time: start.elapsed().as_secs_f64(),
        converged: true,
        column,
    };
    (tau, report)
}

/// Plain conjugate gradient from `tau = 0`. When the recurrence residual
/// meets the tolerance the true residual is checked and the iteration
/// restarts from it if needed. Reaching `max_iter` yields an unconverged
/// report, not an error.
pub fn solve_cg(
    op: &SystemOperator,
    p: &[f64],
    cfg: &SolveConfig,
) -> Result<(VoxelField, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let b = op.rhs(p)?;
    let bnorm = weighted_norm(&b);
    if bnorm == 0.0 || op.coeffs().masked_in_count() == 0 {
        return Ok(trivial_report(op, p, cfg, start));
    }
    let w = op.grid().cell_volume();
    let dot = |a: &VoxelField, b: &VoxelField| crate::linalg::dot(a.data(), b.data()) * w;

    let mut x = VoxelField::zeros(*op.grid(), op.components());
    let mut r = b.clone();
    let mut dir = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let ad = op.apply_unchecked(&dir)?;
        let curvature = dot(&dir, &ad);
        if !curvature.is_finite() {
            return Err(Error::NonFinite(format!(
                "conjugate gradient iteration {iterations}"
            )));
        }
        if curvature == 0.0 {
            return Err(Error::Breakdown {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rr / curvature;
        axpy(alpha, dir.data(), x.data_mut());
        axpy(-alpha, ad.data(), r.data_mut());
        iterations += 1;
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite(format!(
                "conjugate gradient iteration {iterations}"
            )));
        }
        history.push(rel);
        if rel <= cfg.rel_tol {
            let mut true_r = op.apply_unchecked(&x)?;
            true_r
                .data_mut()
                .par_iter_mut()
                .zip(b.data().par_iter())
                .for_each(|(t, b)| *t = b - *t);
            let true_rel = weighted_norm(&true_r) / bnorm;
            if true_rel <= cfg.rel_tol {
                converged = true;
                break;
            }
            r = true_r;
            rr = dot(&r, &r);
            dir = r.clone();
            continue;
        }
        let beta = rr_new / rr;
        dir.data_mut()
            .par_iter_mut()
            .zip(r.data().par_iter())
            .for_each(|(d, r)| *d = r + beta * *d);
        rr = rr_new;
    }
    let residual = relative_residual(op, &x, &b, bnorm)?;
    let column = homogenized_column(&x, p, op.coeffs().reference());
    let report = SolveReport {
        side: op.grid().side(),
        variant: op.green().kind().label().into(),
        solver: cfg.solver,
        iterations,
        residual_history: history,
        residual,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        column,
    };
    Ok((x, report))
}

/// Basic fixed-point scheme `tau <- (A^h - A0)(p - Gamma * tau)` on the mask.
///
/// Converges when the reference medium is stiff enough relative to the
/// phases (a common choice puts `A0` between the extreme phase moduli, or
/// above all of them). Growth of the residual by more than 10x over 10
/// iterations is reported as divergence.
pub fn solve_fixed_point(
    op: &SystemOperator,
    p: &[f64],
    cfg: &SolveConfig,
) -> Result<(VoxelField, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let b = op.rhs(p)?;
    let bnorm = weighted_norm(&b);
    if bnorm == 0.0 || op.coeffs().masked_in_count() == 0 {
        return Ok(trivial_report(op, p, cfg, start));
    }
    let inverse: Vec<SmallMat> = op.coeffs().inverse_palette()?;
    let m = op.components();
    let coeffs = op.coeffs();
    let mut tau = VoxelField::zeros(*op.grid(), m);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut g = op.green().apply_field(&tau)?;
        op.project(&mut g);
        // residual K tau + g - b
        let mut res = VoxelField::zeros(*op.grid(), m);
        coeffs.apply_local(tau.data(), res.data_mut());
        res.data_mut()
            .par_iter_mut()
            .zip(g.data().par_iter().zip(b.data().par_iter()))
            .for_each(|(r, (g, b))| *r += g - b);
        let rel = weighted_norm(&res) / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite(format!(
                "fixed-point iteration {iterations}"
            )));
        }
        history.push(rel);
        if rel <= cfg.rel_tol {
            converged = true;
            break;
        }
        let n = history.len();
        if n > 10 && rel > 10.0 * history[n - 11] {
            return Err(Error::Divergence {
                iteration: iterations,
                growth: rel / history[n - 11],
            });
        }
        if iterations >= cfg.max_iter {
            break;
        }
        tau.data_mut()
            .par_chunks_mut(m)
            .zip(g.data().par_chunks(m).zip(b.data().par_chunks(m)))
            .enumerate()
            .for_each(|(v, (t, (g, b)))| match coeffs.palette_index(v) {
                crate::microstructure::CoefficientField::MASKED_OUT => t.fill(0.0),
                id => {
                    let mut rhs = [0.0; MAX_COMPONENTS];
                    for c in 0..m {
                        rhs[c] = b[c] - g[c];
                    }
                    inverse[id as usize].mul_vec(&rhs[..m], t);
                }
            });
        iterations += 1;
    }
    let residual = *history.last().expect("at least one residual");
    history.remove(0);
    let column = homogenized_column(&tau, p, op.coeffs().reference());
    let report = SolveReport {
        side: op.grid().side(),
        variant: op.green().kind().label().into(),
        solver: cfg.solver,
        iterations,
        residual_history: history,
        residual,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        column,
    };
    Ok((tau, report))
}

/// `A*_h p = A0 p + h^d sum_beta tau_beta`.
pub fn homogenized_column(tau: &VoxelField, p: &[f64], reference: &ReferenceMedium) -> Vec<f64> {
    let a0 = reference.matrix();
    let mean = tau.mean();
    (0..p.len())
        .map(|i| (0..p.len()).map(|j| a0[(i, j)] * p[j]).sum::<f64>() + mean[i])
        .collect()
}

/// Full homogenized matrix from the canonical loadings.
#[derive(Clone, Debug)]
pub struct HomogenizedTensor {
    pub physics: Physics,
    /// Symmetrized matrix (tensor coordinates for elasticity).
    pub matrix: DMatrix<f64>,
    /// Largest `|A - A^T|` before symmetrization, relative to `max |A|`.
    pub asymmetry: f64,
    /// False when any column failed to converge.
    pub converged: bool,
    pub reports: Vec<SolveReport>,
}

pub fn homogenized_tensor(op: &SystemOperator, cfg: &SolveConfig) -> Result<HomogenizedTensor> {
    let m = op.components();
    let mut raw = DMatrix::zeros(m, m);
    let mut reports = Vec::with_capacity(m);
    for a in 0..m {
        let mut p = vec![0.0; m];
        p[a] = 1.0;
        let (_, report) = solve(op, &p, cfg)?;
        for i in 0..m {
            raw[(i, a)] = report.column[i];
        }
        reports.push(report);
    }
    let scale = raw.amax();
    let asymmetry = if scale > 0.0 {
        (&raw - raw.transpose()).amax() / scale
    } else {
        0.0
    };
    let matrix = (&raw + raw.transpose()) * 0.5;
    Ok(HomogenizedTensor {
        physics: op.coeffs().reference().physics(),
        matrix,
        asymmetry,
        converged: reports.iter().all(|r| r.converged),
        reports,
    })
}

/// Strain estimate `p - Gamma * tau` on every voxel; its mean is `p`.
pub fn reconstruct_strain(
    tau: &VoxelField,
    p: &[f64],
    green: &GreenOperator,
) -> Result<VoxelField> {
    let m = tau.components();
    if p.len() != m {
        return Err(Error::InvalidArgument("loading size mismatch".into()));
    }
    let mut e = green.apply_field(tau)?;
    e.data_mut().par_chunks_mut(m).for_each(|c| {
        for (x, pi) in c.iter_mut().zip(p) {
            *x = pi - *x;
        }
    });
    Ok(e)
}

/// `K_beta tau_beta` per voxel: the strain implied by the polarization,
/// `(A^h - A0)^{-1} tau`, zero outside the mask.
pub fn polarization_strain(op: &SystemOperator, tau: &VoxelField) -> VoxelField {
    let mut out = VoxelField::zeros(*op.grid(), op.components());
    op.coeffs().apply_local(tau.data(), out.data_mut());
    out
}
