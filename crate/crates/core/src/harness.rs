//! Experiment driver: generates or loads a problem, builds one hierarchy per
//! requested prolongation variant, solves with a shared right-hand side, and
//! emits the machine-readable report.

use crate::coarsening::NearKernel;
use crate::emin::Precond;
use crate::error::{Error, Result};
use crate::mm::{mm_read, mm_read_dense};
use crate::problems::{gen_elasticity_cube, gen_poisson, rigid_body_modes};
use crate::report::{
    variant_run, ConfigEcho, ExperimentReport, MaterialEcho, ProblemEcho, Software,
    REPORT_SCHEMA_VERSION,
};
use crate::solver::{build_hierarchy, pcg_solve, BuildConfig, OuterSmoother, Variant};
use crate::sparse::SparseMatrix;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Poisson2d,
    Poisson3d,
    Elasticity3d,
    File,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson2d" => Ok(ProblemKind::Poisson2d),
            "poisson3d" => Ok(ProblemKind::Poisson3d),
            "elasticity3d" => Ok(ProblemKind::Elasticity3d),
            "file" => Ok(ProblemKind::File),
            other => Err(Error::InvalidConfig(format!("unknown problem '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Poisson2d => "poisson2d",
            ProblemKind::Poisson3d => "poisson3d",
            ProblemKind::Elasticity3d => "elasticity3d",
            ProblemKind::File => "file",
        }
    }
}

/// Near-kernel source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NullspaceSpec {
    Ones,
    RigidBody,
    File(PathBuf),
}

impl NullspaceSpec {
    pub fn parse(s: &str) -> NullspaceSpec {
        match s.to_ascii_lowercase().as_str() {
            "ones" => NullspaceSpec::Ones,
            "rigid_body" | "rigid-body" => NullspaceSpec::RigidBody,
            _ => NullspaceSpec::File(PathBuf::from(s)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            NullspaceSpec::Ones => "ones".into(),
            NullspaceSpec::RigidBody => "rigid_body".into(),
            NullspaceSpec::File(p) => p.display().to_string(),
        }
    }
}

/// What to solve.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    /// Grid dimensions (elements for elasticity, nodes for Poisson).
    pub dims: Vec<usize>,
    pub young: f64,
    pub poisson: f64,
    pub matrix_path: Option<PathBuf>,
    pub nullspace: NullspaceSpec,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            kind: ProblemKind::Poisson2d,
            dims: vec![16, 16],
            young: 1.0,
            poisson: 0.25,
            matrix_path: None,
            nullspace: NullspaceSpec::Ones,
        }
    }
}

/// Experiment-wide parameters shared by every variant.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub theta: f64,
    pub l_max: usize,
    pub pattern_distance: usize,
    pub tau: f64,
    pub emin_maxit: usize,
    /// Preconditioner used when a variant does not pin one itself.
    pub precond: Precond,
    pub seed: u64,
    pub tol: f64,
    pub solve_maxit: usize,
    pub threads: usize,
    pub smoother: OuterSmoother,
    pub omega: f64,
    pub coarse_size: usize,
    pub max_levels: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            theta: 0.25,
            l_max: 3,
            pattern_distance: 1,
            tau: 0.1,
            emin_maxit: 10,
            precond: Precond::Jacobi,
            seed: 42,
            tol: 1e-8,
            solve_maxit: 1000,
            threads: 0, // 0 = library default
            smoother: OuterSmoother::SymmetricGaussSeidel,
            omega: 0.7,
            coarse_size: 500,
            max_levels: 25,
        }
    }
}

impl ExperimentConfig {
    pub fn build_config(&self, variant: Variant) -> BuildConfig {
        BuildConfig {
            variant,
            theta: self.theta,
            seed: self.seed,
            l_max: self.l_max,
            pattern_distance: self.pattern_distance,
            tau: self.tau,
            omega: self.omega,
            coarse_size: self.coarse_size,
            max_levels: self.max_levels,
            smoother: self.smoother,
            jacobi_omega: 2.0 / 3.0,
        }
    }
}

/// Materialize the system matrix and near kernel for a problem spec.
pub fn build_problem(spec: &ProblemSpec) -> Result<(SparseMatrix, NearKernel, ProblemEcho)> {
    let (a, kernel, material): (SparseMatrix, NearKernel, Option<MaterialEcho>) = match spec.kind {
        ProblemKind::Poisson2d => {
            if spec.dims.len() < 2 {
                return Err(Error::InvalidConfig("poisson2d needs nx and ny".into()));
            }
            let (a, k) = gen_poisson(&spec.dims[..2])?;
            (a, k, None)
        }
        ProblemKind::Poisson3d => {
            if spec.dims.len() < 3 {
                return Err(Error::InvalidConfig("poisson3d needs nx, ny, nz".into()));
            }
            let (a, k) = gen_poisson(&spec.dims[..3])?;
            (a, k, None)
        }
        ProblemKind::Elasticity3d => {
            if spec.dims.len() < 3 {
                return Err(Error::InvalidConfig("elasticity3d needs nx, ny, nz".into()));
            }
            if spec.dims[..3].iter().any(|&d| d < 2) {
                return Err(Error::InvalidConfig(
                    "elasticity3d needs at least 2 elements per axis".into(),
                ));
            }
            let cube = gen_elasticity_cube(
                spec.dims[0],
                spec.dims[1],
                spec.dims[2],
                spec.young,
                spec.poisson,
            )?;
            let kernel = match &spec.nullspace {
                NullspaceSpec::RigidBody => rigid_body_modes(&cube.node_coords, &cube.free_dofs),
                NullspaceSpec::Ones => NearKernel::new(crate::dense::DenseMatrix::from_fn(
                    cube.matrix.nrows(),
                    1,
                    |_, _| 1.0,
                )),
                NullspaceSpec::File(p) => NearKernel::new(mm_read_dense(p)?),
            };
            (
                cube.matrix,
                kernel,
                Some(MaterialEcho {
                    young: spec.young,
                    poisson: spec.poisson,
                }),
            )
        }
        ProblemKind::File => {
            let path = spec.matrix_path.as_ref().ok_or(Error::InvalidConfig(
                "file problem needs a matrix path".into(),
            ))?;
            let a = mm_read(path)?;
            a.check_spd_symmetry()?;
            let kernel = match &spec.nullspace {
                NullspaceSpec::Ones => {
                    NearKernel::new(crate::dense::DenseMatrix::from_fn(a.nrows(), 1, |_, _| 1.0))
                }
                NullspaceSpec::RigidBody => {
                    return Err(Error::InvalidConfig(
                        "rigid_body requires node coordinates; supply --nullspace <file>".into(),
                    ))
                }
                NullspaceSpec::File(p) => NearKernel::new(mm_read_dense(p)?),
            };
            (a, kernel, None)
        }
    };
    if kernel.n() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "nullspace has {} rows, matrix has {}",
            kernel.n(),
            a.nrows()
        )));
    }
    let echo = ProblemEcho {
        kind: spec.kind.name().to_string(),
        dims: spec.dims.clone(),
        nrows: a.nrows(),
        nnz: a.nnz(),
        material,
        matrix_path: spec.matrix_path.as_ref().map(|p| p.display().to_string()),
        nullspace: spec.nullspace.name(),
    };
    Ok((a, kernel, echo))
}

/// Shared right-hand side: the constant vector scaled to unit 2-norm.
pub fn unit_rhs(n: usize) -> Vec<f64> {
    let v = 1.0 / (n as f64).sqrt();
    vec![v; n]
}

/// Run one experiment: one hierarchy and one solve per variant, identical
/// right-hand side and tolerance throughout.
pub fn run_experiment(
    spec: &ProblemSpec,
    variants: &[Variant],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no variants requested".into()));
    }
    let (a, kernel, problem_echo) = build_problem(spec)?;
    let b = unit_rhs(a.nrows());
    let mut runs = Vec::with_capacity(variants.len());
    for &variant in variants {
        let bc = cfg.build_config(variant);
        let h = build_hierarchy(a.clone(), kernel.clone(), &bc)?;
        let (_x, solve) = pcg_solve(&a, &b, &h, cfg.tol, cfg.solve_maxit)?;
        runs.push(variant_run(variant.to_string(), &h, &solve));
    }
    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        software: Software {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        problem: problem_echo,
        config: ConfigEcho {
            theta: cfg.theta,
            pattern_distance: cfg.pattern_distance,
            tau: cfg.tau,
            emin_maxit: cfg.emin_maxit,
            precond: match cfg.precond {
                Precond::Jacobi => "jacobi".to_string(),
                Precond::BlockSgs => "sgs".to_string(),
            },
            lmax: cfg.l_max,
            seed: cfg.seed,
            tol: cfg.tol,
            solve_maxit: cfg.solve_maxit,
            threads: cfg.threads,
            smoother: match cfg.smoother {
                OuterSmoother::SymmetricGaussSeidel => "sgs".to_string(),
                OuterSmoother::Jacobi => "jacobi".to_string(),
            },
            omega: cfg.omega,
            coarse_size: cfg.coarse_size,
            max_levels: cfg.max_levels,
        },
        runs,
    })
}

/// True when every run in the report converged (drives the CLI exit code).
pub fn all_converged(report: &ExperimentReport) -> bool {
    report.runs.iter().all(|r| r.solve.converged)
}
