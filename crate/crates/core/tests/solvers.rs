use lippmann::green::{GreenKind, GreenOperator};
use lippmann::grid::{Grid, VoxelField};
use lippmann::microstructure::{build_coefficients, Microstructure, PhaseTensor};
use lippmann::operator::SystemOperator;
use lippmann::solvers::{
    homogenized_tensor, reconstruct_strain, solve, solve_cg, solve_fixed_point, SolveConfig,
    SolverKind,
};
use lippmann::Error;

fn iso(dim: usize, a: f64) -> PhaseTensor {
    PhaseTensor::isotropic_conduction(dim, a).unwrap()
}

fn system(micro: &Microstructure, a0: f64, side: usize, kind: GreenKind) -> SystemOperator {
    let dim = micro.grid().dim();
    let reference = iso(dim, a0);
    let coeffs = build_coefficients(micro, &reference, side).unwrap();
    let green = GreenOperator::new(kind, reference, *coeffs.grid()).unwrap();
    SystemOperator::new(coeffs, green).unwrap()
}

fn cg(tol: f64) -> SolveConfig {
    SolveConfig::new(SolverKind::ConjugateGradient, tol, 500).unwrap()
}

#[test]
fn uniform_medium_converges_in_one_iteration() {
    let grid = Grid::new(2, 8).unwrap();
    let micro = Microstructure::uniform(grid, iso(2, 2.0)).unwrap();
    for kind in GreenKind::all() {
        let op = system(&micro, 1.0, 8, kind);
        let (tau, report) = solve_cg(&op, &[1.0, 0.0], &cg(1e-10)).unwrap();
        assert_eq!(report.iterations, 1, "{kind}");
        assert!(report.converged);
        assert!((report.column[0] - 2.0).abs() < 1e-12);
        assert!(report.column[1].abs() < 1e-12);
        assert!(tau.data().chunks(2).all(|c| (c[0] - 1.0).abs() < 1e-12));
    }
}

#[test]
fn laminate_matches_harmonic_mean() {
    let grid = Grid::new(1, 16).unwrap();
    let micro = Microstructure::laminate(grid, 0, vec![iso(1, 1.0), iso(1, 4.0)]).unwrap();
    for side in [4, 8, 16] {
        let op = system(&micro, 0.5, side, GreenKind::consistent());
        let (_, report) = solve_cg(&op, &[1.0], &cg(1e-10)).unwrap();
        assert!(
            (report.column[0] - 1.6).abs() < 1e-8,
            "N={side}: {}",
            report.column[0]
        );
    }
}

#[test]
fn fixed_point_agrees_with_cg_for_stiff_reference() {
    let grid = Grid::new(2, 16).unwrap();
    let micro = Microstructure::checkerboard(grid, vec![iso(2, 1.0), iso(2, 3.0)]).unwrap();
    let op = system(&micro, 4.0, 16, GreenKind::Filtered);
    let fp = SolveConfig::new(SolverKind::FixedPoint, 1e-9, 2000).unwrap();
    let (_, a) = solve(&op, &[1.0, 0.0], &cg(1e-9)).unwrap();
    let (_, b) = solve_fixed_point(&op, &[1.0, 0.0], &fp).unwrap();
    assert!(a.converged && b.converged);
    for i in 0..2 {
        assert!(
            (a.column[i] - b.column[i]).abs() < 1e-6,
            "{:?} vs {:?}",
            a.column,
            b.column
        );
    }
}

#[test]
fn fixed_point_divergence_is_reported() {
    let grid = Grid::new(2, 8).unwrap();
    let micro = Microstructure::checkerboard(grid, vec![iso(2, 1.0), iso(2, 100.0)]).unwrap();
    let op = system(&micro, 2.0, 8, GreenKind::Filtered);
    let fp = SolveConfig::new(SolverKind::FixedPoint, 1e-8, 500).unwrap();
    assert!(matches!(
        solve_fixed_point(&op, &[1.0, 0.0], &fp),
        Err(Error::Divergence { .. })
    ));
}

#[test]
fn max_iter_gives_unconverged_report() {
    let grid = Grid::new(2, 16).unwrap();
    let micro = Microstructure::checkerboard(grid, vec![iso(2, 1.0), iso(2, 50.0)]).unwrap();
    let op = system(&micro, 0.5, 16, GreenKind::Filtered);
    let cfg = SolveConfig::new(SolverKind::ConjugateGradient, 1e-12, 2).unwrap();
    let (_, report) = solve_cg(&op, &[1.0, 0.0], &cfg).unwrap();
    assert!(!report.converged);
    assert_eq!(report.iterations, 2);
    assert!(report.residual > 1e-12);
}

#[test]
fn empty_mask_returns_reference() {
    let grid = Grid::new(2, 4).unwrap();
    let micro = Microstructure::uniform(grid, iso(2, 1.0)).unwrap();
    let op = system(&micro, 1.0, 4, GreenKind::Truncated);
    let (_, report) = solve_cg(&op, &[0.0, 1.0], &cg(1e-8)).unwrap();
    assert_eq!(report.iterations, 0);
    assert_eq!(report.column, vec![0.0, 1.0]);
}

#[test]
fn homogenized_tensor_is_symmetric_and_bounded() {
    let grid = Grid::new(2, 16).unwrap();
    let micro = Microstructure::checkerboard(grid, vec![iso(2, 1.0), iso(2, 4.0)]).unwrap();
    let op = system(&micro, 0.5, 16, GreenKind::Filtered);
    let t = homogenized_tensor(&op, &cg(1e-10)).unwrap();
    assert!(t.converged);
    assert!(t.asymmetry < 1e-6, "{}", t.asymmetry);
    // Keller duality: a* = sqrt(1 * 4) in the limit, discrete value below Voigt
    let (voigt, reuss) = micro.voigt_reuss();
    assert!(t.matrix[(0, 0)] <= voigt[(0, 0)] + 1e-9);
    assert!(t.matrix[(0, 0)] >= reuss[(0, 0)] - 1e-9);
}

#[test]
fn reconstructed_strain_has_mean_loading() {
    let grid = Grid::new(2, 8).unwrap();
    let micro = Microstructure::checkerboard(grid, vec![iso(2, 1.0), iso(2, 3.0)]).unwrap();
    let op = system(&micro, 0.5, 8, GreenKind::FiniteDifference);
    let (tau, _) = solve_cg(&op, &[0.3, -0.7], &cg(1e-10)).unwrap();
    let e = reconstruct_strain(&tau, &[0.3, -0.7], op.green()).unwrap();
    let mean = e.mean();
    assert!((mean[0] - 0.3).abs() < 1e-12 && (mean[1] + 0.7).abs() < 1e-12);
}

#[test]
fn apply_rejects_polarization_outside_mask() {
    let grid = Grid::new(1, 8).unwrap();
    let micro = Microstructure::laminate(grid, 0, vec![iso(1, 1.0), iso(1, 3.0)]).unwrap();
    let op = system(&micro, 1.0, 8, GreenKind::Truncated);
    let tau = VoxelField::constant(grid, &[1.0]);
    assert!(matches!(op.apply(&tau), Err(Error::MaskViolation(0))));
}

#[test]
fn config_validation() {
    assert!(SolveConfig::new(SolverKind::ConjugateGradient, 0.0, 10).is_err());
    assert!(SolveConfig::new(SolverKind::ConjugateGradient, 1e-5, 0).is_err());
    assert_eq!(
        "fixed-point".parse::<SolverKind>().unwrap(),
        SolverKind::FixedPoint
    );
    assert!("gmres".parse::<SolverKind>().is_err());
}
