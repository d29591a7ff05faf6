//! Command-line front end: `generate`, `voxelize`, `solve`, `sweep`, `bench`.
//!
//! Exit codes: 0 when every solve converged, 2 when a solve finished
//! without converging, 1 on error.

pub mod config;
pub mod voxel_file;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::green::GreenOperator;
use crate::microstructure::{
    build_coefficients, generate_hard_spheres, voxelize, PackingParams, PhaseTensor, SpherePack,
};
use crate::operator::SystemOperator;
use crate::solvers::{reconstruct_strain, solve, SolveReport};
use crate::study::{
    bench_processes, bench_sizes, convergence_sweep, efficiency_from_timings, BenchProcRow,
};

pub use config::RunConfig;
pub use voxel_file::{VoxelData, VoxelFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lippmann",
    version,
    about = "FFT-based Lippmann-Schwinger homogenization"
)]
pub struct Cli {
    /// Worker threads (0 = all cores); overrides the config and LIPPMANN_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random hard-sphere pack, optionally voxelized.
    Generate(GenerateArgs),
    /// Voxelize a sphere pack file into a phase-index file.
    Voxelize(VoxelizeArgs),
    /// Solve for one loading on each configured grid size.
    Solve(RunArgs),
    /// Convergence sweep over the configured sizes with a rate fit.
    Sweep(RunArgs),
    /// Timings per grid size and per worker count.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of spheres.
    #[arg(long = "n")]
    pub count: usize,
    /// Sphere radius (unit cell).
    #[arg(long = "r")]
    pub radius: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gap: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side of the reference grid; no phase file when omitted.
    #[arg(long)]
    pub nref: Option<usize>,
    #[arg(long, default_value_t = 50_000_000)]
    pub max_steps: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    #[arg(long)]
    pub pack: PathBuf,
    #[arg(long)]
    pub nref: usize,
    /// Output phase-index file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Configuration file (`key = value` lines).
    pub config: PathBuf,
    /// `key=value` overrides applied after the file.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    /// Also write the polarization and strain fields of each solve.
    #[arg(long)]
    pub save_fields: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Configuration file; not needed with --replay.
    pub config: Option<PathBuf>,
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    /// CSV of `P,T_P` timings to turn into an efficiency table instead of measuring.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Output directory for --replay.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses arguments and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn thread_count(flag: Option<usize>, config: Option<usize>) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    if let Some(t) = config {
        return Ok(t);
    }
    match std::env::var(config::ENV_THREADS) {
        Ok(v) => v
            .parse()
            .map_err(|_| Error::Format(format!("bad {}: '{v}'", config::ENV_THREADS))),
        Err(_) => Ok(0),
    }
}

fn in_pool<F: FnOnce() -> Result<i32> + Send>(threads: usize, f: F) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(f)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Generate(a) => in_pool(thread_count(cli.threads, None)?, || cmd_generate(a)),
        Command::Voxelize(a) => in_pool(thread_count(cli.threads, None)?, || cmd_voxelize(a)),
        Command::Solve(a) => {
            let cfg = RunConfig::from_file(&a.config, &a.overrides)?;
            in_pool(thread_count(cli.threads, Some(cfg.threads))?, || {
                cmd_solve(&cfg, a.save_fields)
            })
        }
        Command::Sweep(a) => {
            let cfg = RunConfig::from_file(&a.config, &a.overrides)?;
            in_pool(thread_count(cli.threads, Some(cfg.threads))?, || {
                cmd_sweep(&cfg)
            })
        }
        Command::Bench(a) => {
            if let Some(replay) = &a.replay {
                let out = a.output.clone().unwrap_or_else(|| PathBuf::from("."));
                return cmd_bench_replay(replay, &out);
            }
            let path = a
                .config
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("bench needs a config or --replay".into()))?;
            let cfg = RunConfig::from_file(path, &a.overrides)?;
            in_pool(thread_count(cli.threads, Some(cfg.threads))?, || {
                cmd_bench(&cfg)
            })
        }
    }
}

fn two_phase_catalog() -> Result<Vec<PhaseTensor>> {
    Ok(vec![
        PhaseTensor::isotropic_conduction(3, 1.0)?,
        PhaseTensor::isotropic_conduction(3, 2.0)?,
    ])
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<i32> {
    let params = PackingParams {
        count: a.count,
        radius: a.radius,
        gap: a.gap,
        seed: a.seed,
        max_steps: a.max_steps,
    };
    let pack = generate_hard_spheres(&params)?;
    fs::create_dir_all(&a.output)?;
    fs::write(a.output.join("pack.txt"), pack.to_text())?;
    println!(
        "spheres {} radius {} volume_fraction {:.6}",
        pack.centers().len(),
        pack.radius(),
        pack.volume_fraction()
    );
    if let Some(nref) = a.nref {
        let micro = voxelize(&pack, nref, two_phase_catalog()?)?;
        VoxelFile::phases(*micro.grid(), micro.phases().to_vec())?
            .save(&a.output.join("phases.vox"))?;
        println!(
            "voxelized N={nref} inclusion_fraction {:.6}",
            micro.volume_fractions()[1]
        );
    }
    Ok(EXIT_OK)
}

pub fn cmd_voxelize(a: &VoxelizeArgs) -> Result<i32> {
    let pack = SpherePack::from_text(&fs::read_to_string(&a.pack)?)?;
    let micro = voxelize(&pack, a.nref, two_phase_catalog()?)?;
    VoxelFile::phases(*micro.grid(), micro.phases().to_vec())?.save(&a.output)?;
    println!(
        "voxelized N={} inclusion_fraction {:.6}",
        a.nref,
        micro.volume_fractions()[1]
    );
    Ok(EXIT_OK)
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join("config.resolved"), cfg.resolved_text())?;
    Ok(())
}

fn operator_for(
    cfg: &RunConfig,
    micro: &crate::microstructure::Microstructure,
    side: usize,
) -> Result<SystemOperator> {
    let reference = cfg.reference_medium()?;
    let coeffs = build_coefficients(micro, &reference, side)?;
    let green = GreenOperator::new(cfg.variant, reference, *coeffs.grid())?;
    SystemOperator::new(coeffs, green)
}

pub fn cmd_solve(cfg: &RunConfig, save_fields: bool) -> Result<i32> {
    prepare_output(cfg)?;
    let micro = cfg.microstructure()?;
    let m = cfg.loading.len();
    let mut csv = SolveReport::csv_header(m) + "\n";
    let mut all_converged = true;
    for &side in &cfg.sizes {
        let op = operator_for(cfg, &micro, side)?;
        let (tau, report) = solve(&op, &cfg.loading, &cfg.solve)?;
        println!(
            "N={side} iterations={} residual={:.3e} converged={} column={:?}",
            report.iterations, report.residual, report.converged, report.column
        );
        csv.push_str(&report.csv_row());
        csv.push('\n');
        all_converged &= report.converged;
        if save_fields {
            let strain = reconstruct_strain(&tau, &cfg.loading, op.green())?;
            VoxelFile::field(&tau).save(&cfg.output.join(format!("tau_N{side}.vox")))?;
            VoxelFile::field(&strain).save(&cfg.output.join(format!("strain_N{side}.vox")))?;
        }
        // partial table stays on disk if a later size fails
        fs::write(cfg.output.join("solve.csv"), &csv)?;
    }
    Ok(if all_converged {
        EXIT_OK
    } else {
        EXIT_UNCONVERGED
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<i32> {
    prepare_output(cfg)?;
    let micro = cfg.microstructure()?;
    let sweep = convergence_sweep(
        &micro,
        &cfg.reference_medium()?,
        cfg.variant,
        &cfg.sizes,
        &cfg.loading,
        &cfg.solve,
        cfg.exact,
    )?;
    let mut csv = String::from("N,variant,solver,iterations,wall_time_s,residual,value,error\n");
    for r in &sweep.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6e},{:.6e},{:.12e},{:.6e}",
            r.side,
            r.report.variant,
            r.report.solver,
            r.report.iterations,
            r.report.wall_time,
            r.report.residual,
            r.value,
            (r.value - sweep.reference_value).abs()
        );
        println!(
            "N={} value={:.10} iterations={}",
            r.side, r.value, r.report.iterations
        );
    }
    fs::write(cfg.output.join("sweep.csv"), csv)?;
    let mut pairs = String::from("h,error\n");
    for (h, e) in sweep.error_points() {
        let _ = writeln!(pairs, "{h:.12e},{e:.12e}");
    }
    fs::write(cfg.output.join("errors.csv"), pairs)?;
    if let Some(side) = sweep.aborted_at {
        eprintln!("sweep stopped: solve on N={side} did not converge");
        return Ok(EXIT_UNCONVERGED);
    }
    let fit = sweep.fit()?;
    fs::write(
        cfg.output.join("rate.csv"),
        format!(
            "alpha,log_constant,fit_residual,reference_value\n{:.6},{:.6},{:.6e},{:.12e}\n",
            fit.alpha, fit.log_constant, fit.residual, fit.reference_value
        ),
    )?;
    println!(
        "rate alpha={:.4} (fit residual {:.3e})",
        fit.alpha, fit.residual
    );
    Ok(EXIT_OK)
}

fn procs_csv(rows: &[BenchProcRow]) -> String {
    let mut s = String::from("P,T_P,E\n");
    for r in rows {
        let e = r.efficiency.map(|e| format!("{e:.6}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:.6e},{}", r.processes, r.wall_time, e);
    }
    s
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<i32> {
    prepare_output(cfg)?;
    let micro = cfg.microstructure()?;
    let sizes = bench_sizes(
        |side| operator_for(cfg, &micro, side),
        &cfg.sizes,
        &cfg.loading,
        &cfg.solve,
        cfg.repeats,
    )?;
    let mut s = String::from("N,iterations,wall_time_s,ratio\n");
    for r in &sizes {
        let _ = writeln!(
            s,
            "{},{},{:.6e},{:.6e}",
            r.side, r.iterations, r.wall_time, r.ratio
        );
        println!(
            "N={} iterations={} T={:.3}s ratio={:.4e}",
            r.side, r.iterations, r.wall_time, r.ratio
        );
    }
    fs::write(cfg.output.join("bench_sizes.csv"), s)?;
    let largest = *cfg.sizes.iter().max().expect("validated non-empty");
    let op = operator_for(cfg, &micro, largest)?;
    let procs = bench_processes(&op, &cfg.loading, &cfg.solve, &cfg.processes, cfg.repeats)?;
    for r in &procs {
        println!(
            "P={} T_P={:.3}s E={}",
            r.processes,
            r.wall_time,
            r.efficiency.map_or("--".into(), |e| format!("{e:.3}"))
        );
    }
    fs::write(cfg.output.join("bench_procs.csv"), procs_csv(&procs))?;
    Ok(EXIT_OK)
}

/// Efficiency table from recorded `P,T_P` rows (a header line is skipped).
pub fn cmd_bench_replay(path: &Path, output: &Path) -> Result<i32> {
    let text = fs::read_to_string(path)?;
    let mut timings = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut parts = line.split(',');
        let (p, t) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        match (p.trim().parse::<usize>(), t.trim().parse::<f64>()) {
            (Ok(p), Ok(t)) if p > 0 && t > 0.0 => timings.push((p, t)),
            _ if timings.is_empty() && p.trim() == "P" => {}
            _ => return Err(Error::Format(format!("bad timing row '{line}'"))),
        }
    }
    let rows = efficiency_from_timings(&timings)?;
    fs::create_dir_all(output)?;
    fs::write(output.join("bench_procs.csv"), procs_csv(&rows))?;
    print!("{}", procs_csv(&rows));
    Ok(EXIT_OK)
}
