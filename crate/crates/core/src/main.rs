//! Experiment CLI: generate or load an SPD problem, build one AMG hierarchy
//! per prolongation variant, solve, and write a JSON report (plus optional
//! CSV energy traces). Exit code 0 means every requested solve converged.

use clap::Parser;
use eminamg::harness::{ExperimentConfig, NullspaceSpec, ProblemKind, ProblemSpec};
use eminamg::report::write_trace_csv;
use eminamg::solver::{OuterSmoother, Variant};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "eminamg",
    version,
    about = "AMG experiments with energy-minimization prolongation"
)]
struct Cli {
    /// Problem kind: poisson2d | poisson3d | elasticity3d | file
    #[arg(long, default_value = "poisson2d")]
    problem: String,

    /// Grid size along x (elements for elasticity, nodes for poisson)
    #[arg(long, default_value_t = 16)]
    nx: usize,

    /// Grid size along y
    #[arg(long, default_value_t = 16)]
    ny: usize,

    /// Grid size along z
    #[arg(long, default_value_t = 16)]
    nz: usize,

    /// Young modulus for elasticity
    #[arg(long, default_value_t = 1.0)]
    young: f64,

    /// Poisson ratio for elasticity, in (0, 0.5)
    #[arg(long, default_value_t = 0.25)]
    poisson_ratio: f64,

    /// Matrix Market file for --problem file
    #[arg(long)]
    matrix: Option<PathBuf>,

    /// Near kernel: ones | rigid_body | <dense .mtx path>
    #[arg(long)]
    nullspace: Option<String>,

    /// Prolongation variant, repeatable:
    /// tentative | smoothed | emin | emin-j[:n] | emin-gs[:n]
    #[arg(long = "variant")]
    variants: Vec<String>,

    /// Strength-of-connection threshold in [0, 1)
    /// (default 0.25; 0.06 for elasticity3d)
    #[arg(long, visible_alias = "strength-threshold")]
    theta: Option<f64>,

    /// Strong-neighbor distance for the energy-minimization pattern
    #[arg(long, default_value_t = 1)]
    pattern_distance: usize,

    /// Relative energy-decrease stopping tolerance in (0, 1]
    #[arg(long, default_value_t = 0.1)]
    tau: f64,

    /// Energy-minimization iteration cap (per level)
    #[arg(long, default_value_t = 10)]
    emin_maxit: usize,

    /// Preconditioner for the bare `emin` variant: jacobi | sgs
    #[arg(long, default_value = "jacobi")]
    precond: String,

    /// Maximum interpolation distance of the tentative setup
    #[arg(long, default_value_t = 3)]
    lmax: usize,

    /// Seed for the PMIS random weights
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Outer PCG relative-residual tolerance
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Outer PCG iteration cap
    #[arg(long, default_value_t = 1000)]
    solve_maxit: usize,

    /// Outer smoother: sgs | jacobi
    #[arg(long, default_value = "sgs")]
    smoother: String,

    /// Weight of the baseline prolongation smoothing
    #[arg(long, default_value_t = 0.7)]
    omega: f64,

    /// Direct-solve threshold for the coarsest level
    #[arg(long, default_value_t = 500)]
    coarse_size: usize,

    /// Maximum number of levels
    #[arg(long, default_value_t = 25)]
    max_levels: usize,

    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Report output path
    #[arg(long, default_value = "report.json")]
    out: PathBuf,

    /// Write finest-level energy traces as CSV (per variant)
    #[arg(long)]
    trace_csv: Option<PathBuf>,
}

fn run(cli: &Cli) -> eminamg::Result<bool> {
    let kind = ProblemKind::parse(&cli.problem)?;
    let nullspace = match &cli.nullspace {
        Some(s) => NullspaceSpec::parse(s),
        None => match kind {
            ProblemKind::Elasticity3d => NullspaceSpec::RigidBody,
            _ => NullspaceSpec::Ones,
        },
    };
    let spec = ProblemSpec {
        kind,
        dims: vec![cli.nx, cli.ny, cli.nz],
        young: cli.young,
        poisson: cli.poisson_ratio,
        matrix_path: cli.matrix.clone(),
        nullspace,
    };
    let smoother = match cli.smoother.to_ascii_lowercase().as_str() {
        "sgs" => OuterSmoother::SymmetricGaussSeidel,
        "jacobi" => OuterSmoother::Jacobi,
        other => {
            return Err(eminamg::Error::InvalidConfig(format!(
                "unknown smoother '{other}'"
            )))
        }
    };
    let precond = match cli.precond.to_ascii_lowercase().as_str() {
        "jacobi" => eminamg::Precond::Jacobi,
        "sgs" => eminamg::Precond::BlockSgs,
        other => {
            return Err(eminamg::Error::InvalidConfig(format!(
                "unknown preconditioner '{other}'"
            )))
        }
    };
    let threads = if cli.threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        cli.threads
    };
    let theta = cli.theta.unwrap_or(match kind {
        ProblemKind::Elasticity3d => 0.06,
        _ => 0.25,
    });
    let cfg = ExperimentConfig {
        theta,
        l_max: cli.lmax,
        pattern_distance: cli.pattern_distance,
        tau: cli.tau,
        emin_maxit: cli.emin_maxit,
        precond,
        seed: cli.seed,
        tol: cli.tol,
        solve_maxit: cli.solve_maxit,
        threads,
        smoother,
        omega: cli.omega,
        coarse_size: cli.coarse_size,
        max_levels: cli.max_levels,
    };
    let variant_strings = if cli.variants.is_empty() {
        vec!["emin-j".to_string()]
    } else {
        cli.variants.clone()
    };
    let mut variants = Vec::with_capacity(variant_strings.len());
    for s in &variant_strings {
        // Bare `emin` resolves through the --precond flag.
        let resolved = if s.eq_ignore_ascii_case("emin") {
            match precond {
                eminamg::Precond::Jacobi => format!("emin-j:{}", cli.emin_maxit),
                eminamg::Precond::BlockSgs => format!("emin-gs:{}", cli.emin_maxit),
            }
        } else {
            s.clone()
        };
        variants.push(Variant::parse(&resolved, cli.emin_maxit)?);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| eminamg::Error::InvalidConfig(format!("thread pool: {e}")))?;
    let report = pool.install(|| eminamg::run_experiment(&spec, &variants, &cfg))?;

    println!(
        "problem {} ({} rows, {} nnz), seed {}",
        report.problem.kind, report.problem.nrows, report.problem.nnz, cfg.seed
    );
    println!(
        "{:<14} {:>6} {:>8} {:>8} {:>6} {:>9} {:>9} {:>9}",
        "variant", "levels", "C_gd", "C_op", "n_it", "T_p [s]", "T_s [s]", "T_i [s]"
    );
    for run in &report.runs {
        println!(
            "{:<14} {:>6} {:>8.3} {:>8.3} {:>6} {:>9.3} {:>9.3} {:>9.3}{}",
            run.variant,
            run.hierarchy.levels,
            run.hierarchy.c_gd,
            run.hierarchy.c_op,
            run.solve.n_it,
            run.hierarchy.t_setup_s,
            run.solve.t_solve_s,
            run.hierarchy.t_improve_s,
            if run.solve.converged {
                ""
            } else {
                "  NOT CONVERGED"
            }
        );
        for w in &run.hierarchy.warnings {
            eprintln!("warning [{}]: {}", run.variant, w);
        }
    }

    report.write_json(&cli.out)?;
    println!("report written to {}", cli.out.display());

    if let Some(csv) = &cli.trace_csv {
        for run in &report.runs {
            let finest = run.hierarchy.level_detail.first();
            let Some(em) = finest.and_then(|d| d.emin.as_ref()) else {
                continue;
            };
            let path = if report.runs.len() == 1 {
                csv.clone()
            } else {
                // One file per variant: stem-variant.csv
                let stem = csv
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| "trace".to_string());
                let variant_tag = run.variant.replace(':', "-");
                csv.with_file_name(format!("{stem}-{variant_tag}.csv"))
            };
            write_trace_csv(&path, em)?;
            println!("energy trace written to {}", path.display());
        }
    }

    Ok(eminamg::all_converged(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more solves did not converge");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
