//! C ABI over the `lippmann` solver.
//!
//! Objects cross the boundary as opaque handles: problems come from
//! `lm_problem_conduction` / `lm_problem_elasticity`, sphere packs from
//! `lm_spheres_generate`, and each is released with the matching `_free`. Every fallible
//! call returns an [`LmStatus`]; on failure a message for the calling thread
//! is available from [`lm_last_error`] until the next failing call.
//! Panics are caught at the boundary and reported as `LM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lippmann::green::GreenKind;
use lippmann::grid::Grid;
use lippmann::microstructure::{
    build_coefficients, generate_hard_spheres, voxelize, Microstructure, PackingParams,
    PhaseTensor, SpherePack,
};
use lippmann::operator::SystemOperator;
use lippmann::solvers::{homogenized_tensor, solve, SolveConfig, SolverKind};
use lippmann::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Packing = 4,
    /// The solve finished without meeting the tolerance; outputs are written.
    Unconverged = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmVariant {
    Consistent = 0,
    Truncated = 1,
    Filtered = 2,
    FiniteDifference = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmSolver {
    ConjugateGradient = 0,
    FixedPoint = 1,
}

/// Summary of one solve.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LmSolveInfo {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
    pub converged: bool,
}

/// A microstructure with its reference medium, Green variant and solver settings.
pub struct LmProblem {
    micro: Microstructure,
    reference: PhaseTensor,
    variant: GreenKind,
    config: SolveConfig,
}

pub struct LmSpherePack {
    pack: SpherePack,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LmStatus {
    match e {
        Error::InvalidGrid(_)
        | Error::InvalidArgument(_)
        | Error::ContrastBound { .. }
        | Error::MaskViolation(_)
        | Error::DenseLimit { .. }
        | Error::Format(_) => LmStatus::InvalidArgument,
        Error::InfeasiblePacking(_) | Error::PackingBudget { .. } => LmStatus::Packing,
        Error::Unconverged { .. } => LmStatus::Unconverged,
        Error::Io(_) => LmStatus::Io,
        _ => LmStatus::Numerical,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<LmStatus, Error>>(f: F) -> LmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            LmStatus::Panic
        }
    }
}

fn null_handle() -> Result<LmStatus, Error> {
    set_error("null handle or output pointer".into());
    Ok(LmStatus::NullPointer)
}

fn null(what: &str) -> Error {
    Error::InvalidArgument(format!("{what} is null"))
}

/// Borrows `len` elements; a null pointer is allowed only when `len == 0`.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Error> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Error> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn variant_kind(v: LmVariant) -> GreenKind {
    match v {
        LmVariant::Consistent => GreenKind::consistent(),
        LmVariant::Truncated => GreenKind::Truncated,
        LmVariant::Filtered => GreenKind::Filtered,
        LmVariant::FiniteDifference => GreenKind::FiniteDifference,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

unsafe fn new_problem(
    dim: usize,
    side: usize,
    phases: *const u8,
    voxel_count: usize,
    catalog: Vec<PhaseTensor>,
    reference: PhaseTensor,
    variant: LmVariant,
    out: *mut *mut LmProblem,
) -> Result<LmStatus, Error> {
    if out.is_null() {
        return null_handle();
    }
    let grid = Grid::new(dim, side)?;
    let phases = slice(phases, voxel_count, "phases")?;
    if voxel_count != grid.voxel_count() {
        return Err(Error::InvalidArgument(format!(
            "{voxel_count} phase entries for {} voxels",
            grid.voxel_count()
        )));
    }
    let micro = Microstructure::new(grid, phases.to_vec(), catalog)?;
    let problem = LmProblem {
        micro,
        reference,
        variant: variant_kind(variant),
        config: SolveConfig::default(),
    };
    *out = Box::into_raw(Box::new(problem));
    Ok(LmStatus::Ok)
}

/// Conduction problem with isotropic phases: `phases` holds `voxel_count`
/// indices into `conductivities` on the `side^dim` reference grid.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_conduction(
    dim: usize,
    side: usize,
    phases: *const u8,
    voxel_count: usize,
    conductivities: *const f64,
    phase_count: usize,
    reference: f64,
    variant: LmVariant,
    out: *mut *mut LmProblem,
) -> LmStatus {
    guard(|| {
        let values = slice(conductivities, phase_count, "conductivities")?;
        let catalog = values
            .iter()
            .map(|&a| PhaseTensor::isotropic_conduction(dim, a))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = PhaseTensor::isotropic_conduction(dim, reference)?;
        new_problem(
            dim,
            side,
            phases,
            voxel_count,
            catalog,
            reference,
            variant,
            out,
        )
    })
}

/// Elasticity problem with isotropic phases given by shear moduli and
/// Poisson ratios.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_elasticity(
    dim: usize,
    side: usize,
    phases: *const u8,
    voxel_count: usize,
    shear_moduli: *const f64,
    poisson_ratios: *const f64,
    phase_count: usize,
    reference_mu: f64,
    reference_nu: f64,
    variant: LmVariant,
    out: *mut *mut LmProblem,
) -> LmStatus {
    guard(|| {
        let mu = slice(shear_moduli, phase_count, "shear_moduli")?;
        let nu = slice(poisson_ratios, phase_count, "poisson_ratios")?;
        let catalog = mu
            .iter()
            .zip(nu)
            .map(|(&m, &n)| PhaseTensor::elasticity(dim, m, n))
            .collect::<Result<Vec<_>, _>>()?;
        let reference = PhaseTensor::elasticity(dim, reference_mu, reference_nu)?;
        new_problem(
            dim,
            side,
            phases,
            voxel_count,
            catalog,
            reference,
            variant,
            out,
        )
    })
}

/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_set_solver(
    problem: *mut LmProblem,
    solver: LmSolver,
    rel_tol: f64,
    max_iter: usize,
) -> LmStatus {
    guard(|| {
        let Some(p) = problem.as_mut() else {
            return null_handle();
        };
        let kind = match solver {
            LmSolver::ConjugateGradient => SolverKind::ConjugateGradient,
            LmSolver::FixedPoint => SolverKind::FixedPoint,
        };
        p.config = SolveConfig::new(kind, rel_tol, max_iter)?;
        Ok(LmStatus::Ok)
    })
}

/// Unknowns per voxel (`dim` for conduction, `dim (dim + 1) / 2` for
/// elasticity); 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_components(problem: *const LmProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.reference.components())
}

fn operator(p: &LmProblem, side: usize) -> Result<SystemOperator, Error> {
    let coeffs = build_coefficients(&p.micro, &p.reference, side)?;
    let green =
        lippmann::green::GreenOperator::new(p.variant, p.reference.clone(), *coeffs.grid())?;
    SystemOperator::new(coeffs, green)
}

/// Solves on the grid of side `solve_side` (dividing the reference side) for
/// the macroscopic loading `loading` and writes `A*_h p` to `column`.
/// `info` may be null.
///
/// # Safety
/// `loading` and `column` must hold `components` values; `info` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_solve(
    problem: *const LmProblem,
    solve_side: usize,
    loading: *const f64,
    column: *mut f64,
    components: usize,
    info: *mut LmSolveInfo,
) -> LmStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return null_handle();
        };
        if components != p.reference.components() {
            return Err(Error::InvalidArgument(format!(
                "expected {} components, got {components}",
                p.reference.components()
            )));
        }
        let loading = slice(loading, components, "loading")?;
        let column = slice_mut(column, components, "column")?;
        let op = operator(p, solve_side)?;
        let (_, report) = solve(&op, loading, &p.config)?;
        column.copy_from_slice(&report.column);
        if let Some(info) = info.as_mut() {
            *info = LmSolveInfo {
                iterations: report.iterations,
                residual: report.residual,
                wall_time: report.wall_time,
                converged: report.converged,
            };
        }
        if report.converged {
            Ok(LmStatus::Ok)
        } else {
            set_error(format!(
                "solve on N={solve_side} stopped at residual {:.3e}",
                report.residual
            ));
            Ok(LmStatus::Unconverged)
        }
    })
}

/// Full symmetrized homogenized matrix, row-major, `components^2` entries.
///
/// # Safety
/// `matrix` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_homogenized(
    problem: *const LmProblem,
    solve_side: usize,
    matrix: *mut f64,
    len: usize,
) -> LmStatus {
    guard(|| {
        let Some(p) = problem.as_ref() else {
            return null_handle();
        };
        let m = p.reference.components();
        if len != m * m {
            return Err(Error::InvalidArgument(format!(
                "matrix needs {} entries, got {len}",
                m * m
            )));
        }
        let out = slice_mut(matrix, len, "matrix")?;
        let t = homogenized_tensor(&operator(p, solve_side)?, &p.config)?;
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = t.matrix[(i, j)];
            }
        }
        if t.converged {
            Ok(LmStatus::Ok)
        } else {
            set_error("at least one loading did not converge".into());
            Ok(LmStatus::Unconverged)
        }
    })
}

/// # Safety
/// `problem` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn lm_problem_free(problem: *mut LmProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Random hard-sphere pack in the periodic unit cube.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_spheres_generate(
    count: usize,
    radius: f64,
    gap: f64,
    seed: u64,
    max_steps: u64,
    out: *mut *mut LmSpherePack,
) -> LmStatus {
    guard(|| {
        if out.is_null() {
            return null_handle();
        }
        let pack = generate_hard_spheres(&PackingParams {
            count,
            radius,
            gap,
            seed,
            max_steps,
        })?;
        *out = Box::into_raw(Box::new(LmSpherePack { pack }));
        Ok(LmStatus::Ok)
    })
}

/// # Safety
/// `pack` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_spheres_count(pack: *const LmSpherePack) -> usize {
    pack.as_ref().map_or(0, |p| p.pack.centers().len())
}

/// # Safety
/// `pack` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lm_spheres_volume_fraction(pack: *const LmSpherePack) -> f64 {
    pack.as_ref().map_or(f64::NAN, |p| p.pack.volume_fraction())
}

/// Copies the centers as `x y z` triples; `len` must be `3 * count`.
///
/// # Safety
/// `centers` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn lm_spheres_centers(
    pack: *const LmSpherePack,
    centers: *mut f64,
    len: usize,
) -> LmStatus {
    guard(|| {
        let Some(p) = pack.as_ref() else {
            return null_handle();
        };
        let src = p.pack.centers();
        if len != 3 * src.len() {
            return Err(Error::InvalidArgument(format!(
                "centers need {} entries, got {len}",
                3 * src.len()
            )));
        }
        let out = slice_mut(centers, len, "centers")?;
        for (o, c) in out.chunks_exact_mut(3).zip(src) {
            o.copy_from_slice(c);
        }
        Ok(LmStatus::Ok)
    })
}

/// Phase map of the pack on a `side^3` grid (1 inside a sphere, 0 outside).
///
/// # Safety
/// `phases` must hold `len = side^3` bytes.
#[no_mangle]
pub unsafe extern "C" fn lm_spheres_voxelize(
    pack: *const LmSpherePack,
    side: usize,
    phases: *mut u8,
    len: usize,
) -> LmStatus {
    guard(|| {
        let Some(p) = pack.as_ref() else {
            return null_handle();
        };
        let catalog = vec![
            PhaseTensor::isotropic_conduction(3, 1.0)?,
            PhaseTensor::isotropic_conduction(3, 2.0)?,
        ];
        let micro = voxelize(&p.pack, side, catalog)?;
        if len != micro.phases().len() {
            return Err(Error::InvalidArgument(format!(
                "phases need {} bytes, got {len}",
                micro.phases().len()
            )));
        }
        slice_mut(phases, len, "phases")?.copy_from_slice(micro.phases());
        Ok(LmStatus::Ok)
    })
}

/// # Safety
/// `pack` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn lm_spheres_free(pack: *mut LmSpherePack) {
    if !pack.is_null() {
        drop(Box::from_raw(pack));
    }
}
