//! Sparse algebraic multigrid with energy-minimization prolongation.
//!
//! The pipeline: a strength-of-connection graph and PMIS splitting pick the
//! coarse grid; a tentative prolongation interpolates the near-kernel modes
//! exactly through max-vol column selection; a restricted, preconditioned
//! conjugate-gradient pass minimizes the prolongation energy tr(P^T A P)
//! over an enlarged pattern without ever leaving the constraint manifold;
//! Galerkin products stack the levels into a V-cycle preconditioner for an
//! outer PCG solve.
//!
//! The `harness` module and the `eminamg` binary wrap the pipeline into
//! reproducible experiments over generated Poisson/elasticity problems or
//! user-supplied Matrix Market files.
//!
//! ```
//! use eminamg::{build_hierarchy, gen_poisson, pcg_solve, unit_rhs, BuildConfig, Variant};
//!
//! let (a, kernel) = gen_poisson(&[32, 32]).unwrap();
//! let cfg = BuildConfig {
//!     variant: Variant::EminJacobi(2),
//!     ..BuildConfig::default()
//! };
//! let hierarchy = build_hierarchy(a.clone(), kernel, &cfg).unwrap();
//! let b = unit_rhs(a.nrows());
//! let (x, report) = pcg_solve(&a, &b, &hierarchy, 1e-8, 100).unwrap();
//! assert!(report.converged);
//! assert_eq!(x.len(), 1024);
//! ```

// Index-parallel loops over several arrays read better than zipped chains in
// the numerical kernels here.
#![allow(clippy::needless_range_loop)]

pub mod coarsening;
pub mod dense;
pub mod emin;
pub mod error;
pub mod harness;
pub mod mm;
pub mod problems;
pub mod report;
pub mod solver;
pub mod sparse;
pub mod tentative;
pub mod vector;

pub use coarsening::{
    cf_split_pmis, expand_pattern, strength_of_connection, CfSplitting, Label, NearKernel,
    StrengthGraph,
};
pub use dense::{qr_economy, svd, Cholesky, DenseMatrix, QrFactors, Svd, RANK_TOL};
pub use emin::{
    apply_constraint_transpose, constraint_residual, emin_pcg, emin_setup, energy_of, masked_spmm,
    ConstraintProjector, EminConfig, EminOperator, EminReport, Precond,
};
pub use error::{Error, Result};
pub use harness::{
    all_converged, build_problem, run_experiment, unit_rhs, ExperimentConfig, NullspaceSpec,
    ProblemKind, ProblemSpec,
};
pub use mm::{mm_read, mm_read_dense, mm_write, mm_write_dense};
pub use problems::{gen_elasticity_cube, gen_poisson, ElasticityCube};
pub use report::{validate_report_json, ExperimentReport, REPORT_SCHEMA};
pub use solver::{
    build_hierarchy, galerkin, pcg_solve, BuildConfig, Hierarchy, OuterSmoother, SolveReport,
    Variant,
};
pub use sparse::SparseMatrix;
pub use tentative::{
    max_vol_select, ptent_setup, smoothed_prolongation, Prolongation, TentativeReport,
};
