use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("imaginary residue {residue:.3e} exceeds tolerance {tolerance:.1e} (symbol breaks Hermitian symmetry)")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("phase {phase} violates the contrast bound: smallest |eigenvalue| of A - A0 is {gap:.3e} < {floor:.3e}")]
    ContrastBound { phase: usize, gap: f64, floor: f64 },

    #[error("sphere packing infeasible: {0}")]
    InfeasiblePacking(String),

    #[error("sphere packing budget exhausted: placed {achieved} of {requested} spheres")]
    PackingBudget { achieved: usize, requested: usize },

    #[error("consistent Green series not converged: last-shell estimate {estimate:.3e} > {tolerance:.1e}")]
    SeriesNotConverged { estimate: f64, tolerance: f64 },

    #[error("input is nonzero on masked-out voxel {0}")]
    MaskViolation(usize),

    #[error("dense system has {rows} rows, above the limit of {limit}")]
    DenseLimit { rows: usize, limit: usize },

    #[error("conjugate gradient breakdown at iteration {iteration}: <p, Ap> = {curvature:.3e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("fixed-point iteration diverging at iteration {iteration} (residual grew {growth:.1}x over 10 iterations); choose a stiffer reference medium")]
    Divergence { iteration: usize, growth: f64 },

    #[error("voxel {voxel}: coefficient does not commute with the reference medium (defect {defect:.3e})")]
    NonCommuting { voxel: usize, defect: f64 },

    #[error("voxel {0}: averaged coefficient is singular")]
    SingularCoefficient(usize),

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("solve at N = {side} did not converge (residual {residual:.3e})")]
    Unconverged { side: usize, residual: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
