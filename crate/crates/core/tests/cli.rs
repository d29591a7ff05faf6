use std::fs;
use std::path::Path;
use std::sync::Mutex;

use proptest::prelude::*;

use lippmann::cli::config::{parse_pairs, RunConfig, ENV_OUTPUT};
use lippmann::cli::voxel_file::{VoxelData, VoxelFile};
use lippmann::cli::{run, EXIT_ERROR, EXIT_OK, EXIT_UNCONVERGED};
use lippmann::grid::{Grid, VoxelField};

// Config loading reads the environment, so tests that load configs or touch
// it take this lock.
static ENV: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    ENV.lock().unwrap_or_else(|e| e.into_inner())
}

fn lippmann(args: &[&str]) -> i32 {
    run(std::iter::once("lippmann").chain(args.iter().copied()))
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(
        &path,
        format!("{body}\noutput = {}\n", dir.join("out").display()),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

const LAMINATE: &str = "\
geometry = laminate dim=1 side=16 axis=0
phases = 1, 4
reference = 0.5
variant = consistent
rel_tol = 1e-10
loading = 1
sizes = 4, 8, 16
";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phase_files_round_trip_byte_exact(dim in 1usize..=3, side in 2usize..=6, seed in any::<u64>()) {
        let grid = Grid::new(dim, side).unwrap();
        let phases: Vec<u8> = (0..grid.voxel_count()).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
        let file = VoxelFile::phases(grid, phases).unwrap();
        let bytes = file.to_bytes().unwrap();
        let back = VoxelFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn real_files_round_trip_byte_exact(
        side in 2usize..=5,
        m in 1usize..=3,
        values in prop::collection::vec(any::<f64>(), 75),
    ) {
        let grid = Grid::new(2, side).unwrap();
        let data: Vec<f64> = values.iter().cycle().take(grid.voxel_count() * m).copied().collect();
        let field = VoxelField::from_vec(grid, m, data.clone()).unwrap();
        let bytes = VoxelFile::field(&field).to_bytes().unwrap();
        let back = VoxelFile::from_bytes(&bytes).unwrap();
        match back.data {
            VoxelData::Real { components, values } => {
                prop_assert_eq!(components, m);
                // compare bit patterns so NaN payloads count too
                let a: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
            VoxelData::Phases(_) => prop_assert!(false, "kind changed"),
        }
    }
}

#[test]
fn voxel_header_layout() {
    let file = VoxelFile::phases(Grid::new(3, 2).unwrap(), vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
    let bytes = file.to_bytes().unwrap();
    let text = String::from_utf8_lossy(&bytes[..bytes.len() - 8]).into_owned();
    assert!(text.starts_with("LIPPMANN-VOXEL\nversion=1\ndim=3\nside=2\nkind=phase-index\n"));
    let offset: usize = text
        .lines()
        .last()
        .unwrap()
        .strip_prefix("data_offset=")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(offset, bytes.len() - 8);
    assert_eq!(&bytes[offset..], &[0, 1, 2, 3, 4, 5, 6, 7]);
}

#[test]
fn corrupt_voxel_files_are_rejected() {
    let file = VoxelFile::phases(Grid::new(1, 4).unwrap(), vec![0, 1, 0, 1]).unwrap();
    let bytes = file.to_bytes().unwrap();
    assert!(VoxelFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(VoxelFile::from_bytes(b"NOT-A-VOXEL\n").is_err());
    assert!(VoxelFile::from_bytes(b"LIPPMANN-VOXEL\nversion=1").is_err());
    let swapped = String::from_utf8_lossy(&bytes).replace("little-endian", "big-endian-x");
    assert!(VoxelFile::from_bytes(swapped.as_bytes()).is_err());
    assert!(VoxelFile::phases(Grid::new(1, 4).unwrap(), vec![0; 3]).is_err());
}

#[test]
fn config_parsing() {
    let _g = lock();
    let pairs = parse_pairs("a_bad_key = 1").err();
    assert!(pairs.is_some(), "unknown keys are rejected");
    let map = parse_pairs("# comment\nvariant = fd  # trailing\n\nsolver=cg\n").unwrap();
    assert_eq!(map.get("variant").map(String::as_str), Some("fd"));
    assert!(parse_pairs("variant fd").is_err());

    let cfg = RunConfig::from_text(LAMINATE, &["variant=truncated".into()]).unwrap();
    assert_eq!(cfg.variant.label(), "truncated");
    assert_eq!(cfg.sizes, vec![4, 8, 16]);
    assert_eq!(cfg.loading, vec![1.0]);
    assert_eq!(cfg.solve.max_iter, 1000);
    assert!(cfg.resolved_text().contains("variant = truncated\n"));

    let elastic =
        "geometry = checkerboard dim=2 side=8\nphysics = elasticity\nphases = 1/0.3, 10/0.2\n\
                   reference = 0.5/0.3\nloading = shear\nsizes = 8\n";
    let cfg = RunConfig::from_text(elastic, &[]).unwrap();
    assert_eq!(cfg.loading.len(), 3);
    assert!((cfg.loading[2] - std::f64::consts::SQRT_2).abs() < 1e-15);

    for bad in [
        "loading=1,2",
        "rel_tol=2",
        "max_iter=0",
        "variant=spectral",
        "solver=gmres",
        "sizes=",
        "physics=plasticity",
        "geometry=blob side=4",
        "processes=0",
    ] {
        assert!(
            RunConfig::from_text(LAMINATE, &[bad.into()]).is_err(),
            "{bad} accepted"
        );
    }
}

#[test]
fn environment_overrides_output() {
    let _g = lock();
    std::env::set_var(ENV_OUTPUT, "/tmp/from-env");
    let cfg = RunConfig::from_text(LAMINATE, &["output=elsewhere".into()]);
    std::env::remove_var(ENV_OUTPUT);
    assert_eq!(cfg.unwrap().output, Path::new("/tmp/from-env"));
}

#[test]
fn solve_command_writes_results() {
    let _g = lock();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LAMINATE);
    assert_eq!(lippmann(&["solve", &cfg, "--save-fields"]), EXIT_OK);
    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("solve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "N,variant,solver,iterations,wall_time_s,residual,a0"
    );
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        let a: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((a - 1.6).abs() < 1e-8, "{line}");
    }
    assert!(out.join("tau_N8.vox").exists() && out.join("strain_N16.vox").exists());
    let strain = VoxelFile::load(&out.join("strain_N4.vox")).unwrap();
    assert_eq!(strain.kind(), "real-field");
    assert!(fs::read_to_string(out.join("config.resolved"))
        .unwrap()
        .contains("variant = consistent"));
}

#[test]
fn unconverged_solve_exits_with_two() {
    let _g = lock();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geometry = checkerboard dim=2 side=8\nphases = 1, 100\nreference = 0.5\nloading = 1, 0\nsizes = 8\nrel_tol = 1e-12\nmax_iter = 1\n",
    );
    assert_eq!(lippmann(&["solve", &cfg]), EXIT_UNCONVERGED);
    assert!(dir.path().join("out/solve.csv").exists());
}

#[test]
fn sweep_command_writes_a_rate() {
    let _g = lock();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geometry = checkerboard dim=2 side=32\nphases = 1, 4\nreference = 0.5\nloading = 1, 0\nsizes = 4, 8, 16, 32\n",
    );
    assert_eq!(lippmann(&["sweep", &cfg]), EXIT_OK);
    let out = dir.path().join("out");
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("N,variant,solver,iterations,wall_time_s,residual,value,error\n"));
    assert_eq!(sweep.lines().count(), 5);
    assert_eq!(
        fs::read_to_string(out.join("errors.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    assert!(out.join("rate.csv").exists());

    // a single grid cannot be fitted
    let cfg = write_config(
        dir.path(),
        "geometry = uniform dim=1 side=4\nphases = 2\nreference = 1\nloading = 1\nsizes = 4\n",
    );
    assert_eq!(lippmann(&["sweep", &cfg]), EXIT_ERROR);
}

#[test]
fn generate_voxelize_and_solve_from_files() {
    let _g = lock();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    assert_eq!(
        lippmann(&[
            "generate", "--n", "4", "--r", "0.1", "--seed", "3", "--nref", "8", "--output", &d
        ]),
        EXIT_OK
    );
    let pack = dir.path().join("pack.txt");
    let vox = dir.path().join("phases.vox");
    assert!(pack.exists() && vox.exists());
    let again = dir.path().join("again.vox");
    assert_eq!(
        lippmann(&[
            "voxelize",
            "--pack",
            &pack.to_string_lossy(),
            "--nref",
            "8",
            "--output",
            &again.to_string_lossy()
        ]),
        EXIT_OK
    );
    assert_eq!(fs::read(&vox).unwrap(), fs::read(&again).unwrap());

    let cfg = write_config(
        dir.path(),
        &format!("geometry = file path={}\nphases = 1, 3\nreference = 0.5\nloading = 1, 0, 0\nsizes = 4, 8\n", vox.display()),
    );
    assert_eq!(lippmann(&["solve", &cfg]), EXIT_OK);
    // impossible packing
    assert_eq!(
        lippmann(&[
            "generate",
            "--n",
            "50",
            "--r",
            "0.4",
            "--max-steps",
            "1000",
            "--output",
            &d
        ]),
        EXIT_ERROR
    );
}

#[test]
fn bench_replay_and_bad_arguments() {
    let _g = lock();
    let dir = tempfile::tempdir().unwrap();
    let timings = dir.path().join("t.csv");
    fs::write(&timings, "P,T_P\n1,8.0\n2,4.0\n4,2.5\n").unwrap();
    let out = dir.path().join("replay");
    assert_eq!(
        lippmann(&[
            "bench",
            "--replay",
            &timings.to_string_lossy(),
            "--output",
            &out.to_string_lossy()
        ]),
        EXIT_OK
    );
    let csv = fs::read_to_string(out.join("bench_procs.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "P,T_P,E");
    assert!(rows[1].ends_with(','));
    assert!(rows[2].ends_with(",1.000000"), "{}", rows[2]);
    assert!(rows[3].ends_with(",0.800000"), "{}", rows[3]);

    assert_eq!(lippmann(&["solve", "/nonexistent/run.cfg"]), EXIT_ERROR);
    assert_eq!(lippmann(&["frobnicate"]), EXIT_ERROR);
    assert_eq!(lippmann(&["--help"]), EXIT_OK);
}
