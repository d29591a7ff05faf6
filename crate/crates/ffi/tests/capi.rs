use std::ffi::CStr;
use std::ptr;

use lippmann_ffi::*;

fn last_error() -> String {
    let p = lm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn laminate_phases(side: usize) -> Vec<u8> {
    (0..side).map(|i| (i >= side / 2) as u8).collect()
}

#[test]
fn laminate_through_the_c_abi() {
    let phases = laminate_phases(16);
    let values = [1.0, 4.0];
    let mut problem = ptr::null_mut();
    unsafe {
        let s = lm_problem_conduction(
            1,
            16,
            phases.as_ptr(),
            16,
            values.as_ptr(),
            2,
            0.5,
            LmVariant::Consistent,
            &mut problem,
        );
        assert_eq!(s, LmStatus::Ok);
        assert_eq!(lm_problem_components(problem), 1);
        assert_eq!(
            lm_problem_set_solver(problem, LmSolver::ConjugateGradient, 1e-10, 100),
            LmStatus::Ok
        );
        let mut column = [0.0];
        let mut info = LmSolveInfo::default();
        let s = lm_problem_solve(
            problem,
            8,
            [1.0].as_ptr(),
            column.as_mut_ptr(),
            1,
            &mut info,
        );
        assert_eq!(s, LmStatus::Ok);
        assert!(info.converged);
        assert!((column[0] - 1.6).abs() < 1e-8);
        lm_problem_free(problem);
    }
}

#[test]
fn homogenized_matrix_of_uniform_elastic_medium() {
    let phases = [0u8; 64];
    let (mu, nu) = ([2.0], [0.25]);
    let mut problem = ptr::null_mut();
    unsafe {
        let s = lm_problem_elasticity(
            2,
            8,
            phases.as_ptr(),
            64,
            mu.as_ptr(),
            nu.as_ptr(),
            1,
            1.0,
            0.3,
            LmVariant::Filtered,
            &mut problem,
        );
        assert_eq!(s, LmStatus::Ok);
        let m = lm_problem_components(problem);
        assert_eq!(m, 3);
        let mut out = vec![0.0; m * m];
        assert_eq!(
            lm_problem_homogenized(problem, 8, out.as_mut_ptr(), m * m),
            LmStatus::Ok
        );
        // lambda = 2 mu nu / (1 - 2 nu) = 2, so A = [[6,2,0],[2,6,0],[0,0,4]]
        let expected = [6.0, 2.0, 0.0, 2.0, 6.0, 0.0, 0.0, 0.0, 4.0];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{out:?}");
        }
        lm_problem_free(problem);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let phases = laminate_phases(8);
    let values = [1.0, 4.0];
    let mut problem = ptr::null_mut();
    unsafe {
        let s = lm_problem_conduction(
            1,
            8,
            phases.as_ptr(),
            7,
            values.as_ptr(),
            2,
            0.5,
            LmVariant::Filtered,
            &mut problem,
        );
        assert_eq!(s, LmStatus::InvalidArgument);
        assert!(last_error().contains("7 phase entries"));
        assert!(problem.is_null());

        let s = lm_problem_conduction(
            1,
            8,
            ptr::null(),
            8,
            values.as_ptr(),
            2,
            0.5,
            LmVariant::Filtered,
            &mut problem,
        );
        assert_eq!(s, LmStatus::InvalidArgument);
        assert!(last_error().contains("phases is null"));

        let s = lm_problem_conduction(
            1,
            8,
            phases.as_ptr(),
            8,
            values.as_ptr(),
            2,
            0.5,
            LmVariant::Filtered,
            ptr::null_mut(),
        );
        assert_eq!(s, LmStatus::NullPointer);

        assert_eq!(
            lm_problem_set_solver(ptr::null_mut(), LmSolver::FixedPoint, 1e-6, 10),
            LmStatus::NullPointer
        );
        assert_eq!(lm_problem_components(ptr::null()), 0);
        lm_problem_free(ptr::null_mut());
    }
}

#[test]
fn unconverged_solve_still_writes_outputs() {
    let side = 16;
    let phases: Vec<u8> = (0..side * side)
        .map(|v| (((v % side) >= side / 2) ^ ((v / side) >= side / 2)) as u8)
        .collect();
    let values = [1.0, 50.0];
    let mut problem = ptr::null_mut();
    unsafe {
        assert_eq!(
            lm_problem_conduction(
                2,
                side,
                phases.as_ptr(),
                side * side,
                values.as_ptr(),
                2,
                0.5,
                LmVariant::Filtered,
                &mut problem
            ),
            LmStatus::Ok
        );
        assert_eq!(
            lm_problem_set_solver(problem, LmSolver::ConjugateGradient, 1e-12, 2),
            LmStatus::Ok
        );
        let mut column = [0.0; 2];
        let mut info = LmSolveInfo::default();
        let s = lm_problem_solve(
            problem,
            side,
            [1.0, 0.0].as_ptr(),
            column.as_mut_ptr(),
            2,
            &mut info,
        );
        assert_eq!(s, LmStatus::Unconverged);
        assert_eq!(info.iterations, 2);
        assert!(!info.converged);
        assert!(column[0] > 0.5);
        lm_problem_free(problem);
    }
}

#[test]
fn sphere_pack_roundtrip() {
    let mut pack = ptr::null_mut();
    unsafe {
        assert_eq!(
            lm_spheres_generate(10, 0.1, 0.0, 5, 1_000_000, &mut pack),
            LmStatus::Ok
        );
        assert_eq!(lm_spheres_count(pack), 10);
        let f = lm_spheres_volume_fraction(pack);
        assert!((f - 10.0 * 4.0 / 3.0 * std::f64::consts::PI * 1e-3).abs() < 1e-12);
        let mut centers = vec![0.0; 30];
        assert_eq!(
            lm_spheres_centers(pack, centers.as_mut_ptr(), 30),
            LmStatus::Ok
        );
        assert!(centers.iter().all(|c| (0.0..1.0).contains(c)));
        let mut phases = vec![0u8; 32 * 32 * 32];
        assert_eq!(
            lm_spheres_voxelize(pack, 32, phases.as_mut_ptr(), phases.len()),
            LmStatus::Ok
        );
        let inside = phases.iter().filter(|&&p| p == 1).count() as f64 / phases.len() as f64;
        assert!((inside - f).abs() < 0.01, "{inside} vs {f}");
        lm_spheres_free(pack);

        assert_eq!(
            lm_spheres_generate(2, 0.4, 0.0, 0, 100, &mut pack),
            LmStatus::Packing
        );
        assert!(last_error().contains("infeasible"));
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/lippmann.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "lm_problem_conduction",
        "lm_problem_solve",
        "lm_spheres_generate",
        "lm_last_error",
        "LM_STATUS_UNCONVERGED",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // syntax check when a C compiler is around
    if let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", header])
        .status()
    {
        assert!(status.success());
    }
}
