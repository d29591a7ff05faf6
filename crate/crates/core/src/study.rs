//! Verification and measurement harness: sign split and inf-sup constants,
//! convergence sweeps with rate fits, and timing benchmarks.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::elasticity::project_component;
use crate::error::{Error, Result};
use crate::green::{GreenKind, GreenOperator};
use crate::grid::VoxelField;
use crate::linalg::{dot, norm, SmallMat};
use crate::microstructure::{
    build_coefficients, CoefficientField, Microstructure, ReferenceMedium,
};
use crate::operator::SystemOperator;
use crate::solvers::{solve, SolveConfig, SolveReport};

/// Tolerance on `|A^h A0 - A0 A^h|` relative to `|A^h| |A0|`.
pub const COMMUTE_TOL: f64 = 1e-10;

/// Decomposition `tau = plus + minus` along the eigenspaces of
/// `A^h_beta - A0` with positive and negative eigenvalues.
#[derive(Clone, Debug)]
pub struct SignSplit {
    pub plus: VoxelField,
    pub minus: VoxelField,
    /// `plus - minus`.
    pub s: VoxelField,
}

/// Projector onto the positive eigenspace of each palette entry of `K`.
/// `K = (A^h - A0)^{-1}` shares eigenvectors and eigenvalue signs with
/// `A^h - A0`.
fn positive_projectors(coeffs: &CoefficientField) -> Result<Vec<SmallMat>> {
    let a0 = coeffs.reference().matrix();
    let a0_norm = a0.amax();
    let m = coeffs.components();
    let inverse = coeffs.inverse_palette()?;
    coeffs
        .palette()
        .iter()
        .zip(&inverse)
        .enumerate()
        .map(|(i, (k, diff))| {
            let ah = diff.to_dmatrix() + &a0;
            let defect = (&ah * &a0 - &a0 * &ah).amax() / (ah.amax() * a0_norm);
            if defect > COMMUTE_TOL {
                let voxel = (0..coeffs.grid().voxel_count())
                    .find(|&v| coeffs.palette_index(v) as usize == i)
                    .unwrap_or(0);
                return Err(Error::NonCommuting { voxel, defect });
            }
            let eig = SymmetricEigen::new(k.to_dmatrix());
            let mut proj = DMatrix::zeros(m, m);
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                if lambda > 0.0 {
                    let v = eig.eigenvectors.column(j);
                    proj += v * v.transpose();
                }
            }
            Ok(SmallMat::from_dmatrix(&proj))
        })
        .collect()
}

pub fn sign_split(tau: &VoxelField, coeffs: &CoefficientField) -> Result<SignSplit> {
    if tau.grid() != coeffs.grid() || tau.components() != coeffs.components() {
        return Err(Error::InvalidArgument(
            "field does not match the coefficients".into(),
        ));
    }
    let projectors = positive_projectors(coeffs)?;
    let m = coeffs.components();
    let mut plus = VoxelField::zeros(*tau.grid(), m);
    let mut minus = VoxelField::zeros(*tau.grid(), m);
    plus.data_mut()
        .par_chunks_mut(m)
        .zip(minus.data_mut().par_chunks_mut(m))
        .zip(tau.data().par_chunks(m))
        .enumerate()
        .for_each(|(v, ((p, n), t))| {
            let id = coeffs.palette_index(v);
            if id == CoefficientField::MASKED_OUT {
                return;
            }
            projectors[id as usize].mul_vec(t, p);
            for c in 0..m {
                n[c] = t[c] - p[c];
            }
        });
    let mut s = plus.clone();
    s.data_mut()
        .par_iter_mut()
        .zip(minus.data().par_iter())
        .for_each(|(s, n)| *s -= n);
    Ok(SignSplit { plus, minus, s })
}

/// Inf-sup data of one grid.
///
/// The bilinear form is `a(tau, s) = h^d <M tau, s>` and the norms are
/// `h^d`-weighted, so the singular values reported are those of the dense
/// matrix `M` itself; the weights cancel and the values are comparable
/// across grid sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct InfSupRow {
    pub side: usize,
    pub unknowns: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `min a(tau, s) / (|tau| |s|)` over the random sample, `s` from the sign split.
    pub constructive: f64,
    /// `min(kappa_plus, kappa_minus - gamma_max)`: the smallest positive
    /// eigenvalue of `K`, and the smallest `|negative eigenvalue|` of `K`
    /// minus the largest Green symbol eigenvalue. The constructive ratio is
    /// bounded below by this value.
    pub floor: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfSupReport {
    pub rows: Vec<InfSupRow>,
}

impl InfSupReport {
    /// Largest over smallest `sigma_min` across the grids.
    pub fn sigma_min_spread(&self) -> f64 {
        let (lo, hi) = self
            .rows
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
                (lo.min(r.sigma_min), hi.max(r.sigma_min))
            });
        hi / lo
    }
}

fn random_masked_field(coeffs: &CoefficientField, rng: &mut ChaCha8Rng) -> VoxelField {
    let m = coeffs.components();
    let mut f = VoxelField::zeros(*coeffs.grid(), m);
    for v in 0..coeffs.grid().voxel_count() {
        if coeffs.is_masked_in(v) {
            for x in f.voxel_mut(v) {
                *x = StandardNormal.sample(rng);
            }
        }
    }
    f
}

fn instance_floor(op: &SystemOperator) -> f64 {
    let (mut kappa_plus, mut kappa_minus) = (f64::INFINITY, f64::INFINITY);
    for k in op.coeffs().palette() {
        for l in crate::linalg::symmetric_eigenvalues(&k.to_dmatrix()) {
            if l > 0.0 {
                kappa_plus = kappa_plus.min(l);
            } else {
                kappa_minus = kappa_minus.min(-l);
            }
        }
    }
    let gamma_max = op
        .green()
        .symbol_table()
        .iter()
        .flat_map(|s| s.hermitian_eigenvalues())
        .fold(0.0f64, f64::max);
    kappa_plus.min(kappa_minus - gamma_max)
}

/// Dense singular values plus the constructive sign-split bound over
/// `samples` random polarizations for each operator.
pub fn infsup_check(ops: &[SystemOperator], samples: usize, seed: u64) -> Result<InfSupReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(ops.len());
    for op in ops {
        let dense = op.assemble_dense()?;
        let sv = dense.matrix.clone().singular_values();
        let sigma_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        let mut constructive = f64::INFINITY;
        if op.coeffs().masked_in_count() > 0 {
            for _ in 0..samples {
                let tau = random_masked_field(op.coeffs(), &mut rng);
                let split = sign_split(&tau, op.coeffs())?;
                let a_tau = op.apply(&tau)?;
                let ratio =
                    dot(a_tau.data(), split.s.data()) / (norm(tau.data()) * norm(split.s.data()));
                constructive = constructive.min(ratio);
            }
        }
        rows.push(InfSupRow {
            side: op.grid().side(),
            unknowns: dense.matrix.nrows(),
            sigma_min,
            sigma_max,
            constructive,
            floor: instance_floor(op),
            samples,
        });
    }
    Ok(InfSupReport { rows })
}

/// Least-squares fit `log error = log C + alpha log h`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    /// `(h, error)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    pub alpha: f64,
    pub log_constant: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    pub reference_value: f64,
}

pub fn fit_rate(points: &[(f64, f64)], reference_value: f64) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(h, e)| !(h > 0.0 && e > 0.0 && h.is_finite() && e.is_finite()))
    {
        return Err(Error::DegenerateFit(
            "errors and spacings must be positive and finite".into(),
        ));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit(
            "all points share the same spacing".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let log_constant = my - alpha * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - log_constant - alpha * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        points: points.to_vec(),
        alpha,
        log_constant,
        residual,
        reference_value,
    })
}

/// One grid of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub side: usize,
    /// `p^T A*_h p`.
    pub value: f64,
    pub report: SolveReport,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Analytic value when given, else the finest-grid value.
    pub reference_value: f64,
    pub self_convergence: bool,
    /// Side of the first unconverged solve; the table stops there.
    pub aborted_at: Option<usize>,
}

impl Sweep {
    /// `(h, |value - reference|)` for the rows entering the fit. The finest
    /// row is dropped in self-convergence mode.
    pub fn error_points(&self) -> Vec<(f64, f64)> {
        let take = if self.self_convergence {
            self.rows.len().saturating_sub(1)
        } else {
            self.rows.len()
        };
        self.rows[..take]
            .iter()
            .map(|r| (1.0 / r.side as f64, (r.value - self.reference_value).abs()))
            .collect()
    }

    pub fn fit(&self) -> Result<RateFit> {
        if self.aborted_at.is_some() {
            return Err(Error::DegenerateFit(
                "sweep aborted by an unconverged solve".into(),
            ));
        }
        fit_rate(&self.error_points(), self.reference_value)
    }

    pub fn require_converged(&self) -> Result<()> {
        match self.aborted_at {
            None => Ok(()),
            Some(side) => {
                let residual = self.rows.last().map_or(f64::NAN, |r| r.report.residual);
                Err(Error::Unconverged { side, residual })
            }
        }
    }
}

/// Solves on each side in `sizes` (ascending, dividing the reference grid)
/// and records `p^T A*_h p`. Sizes run sequentially.
pub fn convergence_sweep(
    micro: &Microstructure,
    reference: &ReferenceMedium,
    kind: GreenKind,
    sizes: &[usize],
    p: &[f64],
    cfg: &SolveConfig,
    exact: Option<f64>,
) -> Result<Sweep> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "sweep sizes must be non-empty and strictly ascending".into(),
        ));
    }
    if let Some(bad) = sizes.iter().find(|&&n| !micro.grid().side().is_multiple_of(n)) {
        return Err(Error::InvalidArgument(format!(
            "size {bad} does not divide the reference side {}",
            micro.grid().side()
        )));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    let mut aborted_at = None;
    for &side in sizes {
        let coeffs = build_coefficients(micro, reference, side)?;
        let green = GreenOperator::new(kind, reference.clone(), *coeffs.grid())?;
        let op = SystemOperator::new(coeffs, green)?;
        let (_, report) = solve(&op, p, cfg)?;
        let column = DMatrix::from_column_slice(p.len(), 1, &report.column);
        let value = (DMatrix::from_row_slice(1, p.len(), p) * column)[(0, 0)];
        let converged = report.converged;
        rows.push(SweepRow {
            side,
            value,
            report,
        });
        if !converged {
            aborted_at = Some(side);
            break;
        }
    }
    let reference_value = exact.unwrap_or_else(|| rows.last().map_or(f64::NAN, |r| r.value));
    Ok(Sweep {
        rows,
        reference_value,
        self_convergence: exact.is_none(),
        aborted_at,
    })
}

/// `p^T A p` for a full homogenized matrix.
pub fn directional_value(matrix: &DMatrix<f64>, p: &[f64]) -> f64 {
    project_component(matrix, p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSizeRow {
    pub side: usize,
    pub iterations: usize,
    pub wall_time: f64,
    /// `T / (iterations N^d ln N)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchProcRow {
    pub processes: usize,
    pub wall_time: f64,
    /// `T_1 / (P T_P)`; `None` for the baseline.
    pub efficiency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct BenchReport {
    pub sizes: Vec<BenchSizeRow>,
    pub processes: Vec<BenchProcRow>,
}

pub fn time_ratio(wall_time: f64, iterations: usize, side: usize, dim: usize) -> f64 {
    let n = side as f64;
    wall_time / (iterations.max(1) as f64 * n.powi(dim as i32) * n.ln())
}

/// Efficiency table from `(P, T_P)` timings. Requires a `P = 1` entry.
pub fn efficiency_from_timings(timings: &[(usize, f64)]) -> Result<Vec<BenchProcRow>> {
    let t1 = timings
        .iter()
        .find(|t| t.0 == 1)
        .map(|t| t.1)
        .ok_or_else(|| {
            Error::InvalidArgument("efficiency needs a single-process baseline".into())
        })?;
    Ok(timings
        .iter()
        .map(|&(processes, wall_time)| BenchProcRow {
            processes,
            wall_time,
            efficiency: (processes != 1).then(|| t1 / (processes as f64 * wall_time)),
        })
        .collect())
}

fn timed_solve(
    op: &SystemOperator,
    p: &[f64],
    cfg: &SolveConfig,
    repeats: usize,
) -> Result<(f64, SolveReport)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let (_, report) = solve(op, p, cfg)?;
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(report);
    }
    Ok((best, last.expect("at least one repeat")))
}

/// Timings per grid size; `make_op` builds the operator for a side. The
/// reported time is the best of `repeats` solves.
pub fn bench_sizes<F>(
    make_op: F,
    sizes: &[usize],
    p: &[f64],
    cfg: &SolveConfig,
    repeats: usize,
) -> Result<Vec<BenchSizeRow>>
where
    F: Fn(usize) -> Result<SystemOperator>,
{
    sizes
        .iter()
        .map(|&side| {
            let op = make_op(side)?;
            let (wall_time, report) = timed_solve(&op, p, cfg, repeats)?;
            Ok(BenchSizeRow {
                side,
                iterations: report.iterations,
                wall_time,
                ratio: time_ratio(wall_time, report.iterations, side, op.grid().dim()),
            })
        })
        .collect()
}

/// Times the same solve in worker pools of each size in `processes`
/// (all data parallelism, FFTs included, runs inside the pool).
pub fn bench_processes(
    op: &SystemOperator,
    p: &[f64],
    cfg: &SolveConfig,
    processes: &[usize],
    repeats: usize,
) -> Result<Vec<BenchProcRow>> {
    let mut list: Vec<usize> = processes.to_vec();
    if !list.contains(&1) {
        list.insert(0, 1);
    }
    let mut timings = Vec::with_capacity(list.len());
    for &procs in &list {
        if procs == 0 {
            return Err(Error::InvalidArgument(
                "process count must be positive".into(),
            ));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(procs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        let (t, _) = pool.install(|| timed_solve(op, p, cfg, repeats))?;
        timings.push((procs, t));
    }
    efficiency_from_timings(&timings)
}
