//! Multilevel hierarchy construction and the outer PCG iteration
//! preconditioned by a V(1,1)-cycle.

use crate::coarsening::{cf_split_pmis, expand_pattern, strength_of_connection, NearKernel};
use crate::dense::Cholesky;
use crate::emin::{emin_pcg, emin_setup, EminConfig, EminReport, EminSetupStats, Precond};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tentative::{ptent_setup, smoothed_prolongation};
use crate::vector::{axpy, dot, norm2};
use serde::Serialize;
use std::fmt;
use std::time::Instant;

/// How the prolongation is improved after the tentative setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Tentative interpolation as built (constraint-exact, sparsest).
    Tentative,
    /// One step of weighted-Jacobi smoothing on the tentative operator.
    Smoothed,
    /// Energy minimization with the Jacobi preconditioner, n iterations.
    EminJacobi(usize),
    /// Energy minimization with the projected block-SGS preconditioner.
    EminSgs(usize),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Tentative => write!(f, "tentative"),
            Variant::Smoothed => write!(f, "smoothed"),
            Variant::EminJacobi(n) => write!(f, "emin-j:{n}"),
            Variant::EminSgs(n) => write!(f, "emin-gs:{n}"),
        }
    }
}

impl Variant {
    /// Parse `tentative`, `smoothed`, `emin-j[:n]`, `emin-gs[:n]`.
    pub fn parse(s: &str, default_maxit: usize) -> Result<Variant> {
        let lower = s.to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let maxit = match arg {
            Some(a) => a.parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!("bad iteration count in variant '{s}'"))
            })?,
            None => default_maxit,
        };
        match name {
            "tentative" => Ok(Variant::Tentative),
            "smoothed" => Ok(Variant::Smoothed),
            "emin-j" => Ok(Variant::EminJacobi(maxit)),
            "emin-gs" => Ok(Variant::EminSgs(maxit)),
            _ => Err(Error::InvalidConfig(format!("unknown variant '{s}'"))),
        }
    }
}

/// Smoother of the outer V-cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterSmoother {
    /// Forward Gauss-Seidel before coarse correction, backward after.
    SymmetricGaussSeidel,
    /// Damped Jacobi on both sides.
    Jacobi,
}

/// Hierarchy construction parameters.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub variant: Variant,
    /// Strength-of-connection threshold.
    pub theta: f64,
    pub seed: u64,
    /// Maximum interpolation distance of the tentative setup.
    pub l_max: usize,
    /// Strong-neighbor distance for the energy-minimization pattern.
    pub pattern_distance: usize,
    /// Relative energy-decrease stopping tolerance.
    pub tau: f64,
    /// Weight of the baseline prolongation smoothing.
    pub omega: f64,
    /// Switch to a direct solve at or below this size.
    pub coarse_size: usize,
    pub max_levels: usize,
    pub smoother: OuterSmoother,
    /// Damping for the Jacobi outer smoother.
    pub jacobi_omega: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            variant: Variant::EminJacobi(2),
            theta: 0.25,
            seed: 42,
            l_max: 3,
            pattern_distance: 1,
            tau: 0.1,
            omega: 0.7,
            coarse_size: 500,
            max_levels: 25,
            smoother: OuterSmoother::SymmetricGaussSeidel,
            jacobi_omega: 2.0 / 3.0,
        }
    }
}

/// One level of the hierarchy.
pub struct Level {
    pub a: SparseMatrix,
    /// Prolongation to this level from the next coarser one; absent on the
    /// coarsest level.
    pub p: Option<SparseMatrix>,
    /// Restriction P^T, cached.
    pub r: Option<SparseMatrix>,
    pub diag: Vec<f64>,
    /// Near-kernel modes at this level (injected from the finer one).
    pub kernel: NearKernel,
}

/// Per-level setup diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct LevelStats {
    pub rows: usize,
    pub nnz: usize,
    pub coarse_rows: Option<usize>,
    pub tentative_flagged: usize,
    /// Rows of the final prolongation still violating the near-kernel
    /// constraint (excluded from constraint checks).
    pub flagged_rows: Vec<usize>,
    pub emin: Option<EminReport>,
    pub emin_setup: Option<EminSetupStats>,
}

pub struct Hierarchy {
    pub levels: Vec<Level>,
    coarse_solver: Cholesky,
    pub c_gd: f64,
    pub c_op: f64,
    pub level_stats: Vec<LevelStats>,
    pub warnings: Vec<String>,
    /// Total setup time in seconds.
    pub t_setup: f64,
    /// Time spent improving the prolongation (part of t_setup).
    pub t_improve: f64,
    pub smoother: OuterSmoother,
    pub jacobi_omega: f64,
}

/// Galerkin coarse operator A_c = P^T A P with symmetry enforced by
/// averaging; the defect before averaging must stay at roundoff level.
pub fn galerkin(a: &SparseMatrix, p: &SparseMatrix) -> Result<SparseMatrix> {
    let ap = a.spmm(p)?;
    let pt = p.transpose();
    let ac = pt.spmm(&ap)?;
    let defect = ac.symmetry_error();
    let bound = 1e-12 * ac.max_abs().max(f64::MIN_POSITIVE);
    if defect > bound {
        return Err(Error::NotSpd(format!(
            "galerkin product asymmetry {defect:e} exceeds {bound:e}"
        )));
    }
    SparseMatrix::linear_combination(0.5, &ac, 0.5, &ac.transpose())
}

/// Build the multilevel hierarchy: strength graph, PMIS splitting, tentative
/// prolongation, the selected improvement, and the Galerkin product, repeated
/// until the coarse problem is small enough for a direct solve.
pub fn build_hierarchy(
    a: SparseMatrix,
    kernel: NearKernel,
    cfg: &BuildConfig,
) -> Result<Hierarchy> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("hierarchy needs square A".into()));
    }
    if kernel.n() != a.nrows() {
        return Err(Error::DimensionMismatch(
            "near-kernel rows must match the matrix".into(),
        ));
    }
    a.check_spd_symmetry()?;
    let start = Instant::now();
    let mut t_improve = 0.0f64;
    let mut warnings = Vec::new();
    let mut levels: Vec<Level> = Vec::new();
    let mut stats: Vec<LevelStats> = Vec::new();
    let mut cur_a = a;
    let mut cur_kernel = kernel;
    loop {
        let n = cur_a.nrows();
        let nnz = cur_a.nnz();
        let diag = cur_a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
        if n <= cfg.coarse_size || levels.len() + 1 >= cfg.max_levels {
            levels.push(Level {
                a: cur_a,
                p: None,
                r: None,
                diag,
                kernel: cur_kernel,
            });
            stats.push(LevelStats {
                rows: n,
                nnz,
                coarse_rows: None,
                tentative_flagged: 0,
                flagged_rows: Vec::new(),
                emin: None,
                emin_setup: None,
            });
            break;
        }
        let s = strength_of_connection(&cur_a, cfg.theta)?;
        let cf = cf_split_pmis(&s, cfg.seed.wrapping_add(levels.len() as u64));
        let nc = cf.n_coarse();
        if (nc as f64) >= 0.95 * (n as f64) {
            warnings.push(format!(
                "coarsening stagnated at level {} ({} of {} rows stay coarse); stopping",
                levels.len(),
                nc,
                n
            ));
            levels.push(Level {
                a: cur_a,
                p: None,
                r: None,
                diag,
                kernel: cur_kernel,
            });
            stats.push(LevelStats {
                rows: n,
                nnz,
                coarse_rows: None,
                tentative_flagged: 0,
                flagged_rows: Vec::new(),
                emin: None,
                emin_setup: None,
            });
            break;
        }
        let (tentative, trep) = ptent_setup(&s, &cur_kernel, &cf, cfg.l_max)?;
        let improve_start = Instant::now();
        let mut emin_report = None;
        let mut emin_stats = None;
        let mut flagged_rows = tentative.flagged_rows();
        let p: SparseMatrix = match cfg.variant {
            Variant::Tentative => tentative.to_csr(),
            Variant::Smoothed => smoothed_prolongation(&cur_a, &tentative, cfg.omega)?,
            Variant::EminJacobi(maxit) | Variant::EminSgs(maxit) => {
                let precond = match cfg.variant {
                    Variant::EminJacobi(_) => Precond::Jacobi,
                    _ => Precond::BlockSgs,
                };
                let pattern = expand_pattern(&s, tentative.pattern(), &cf, cfg.pattern_distance)?;
                let (proj, p0, setup_stats) = emin_setup(&cur_kernel, &tentative, &pattern)?;
                let econfig = EminConfig {
                    maxit,
                    tau: cfg.tau,
                    precond,
                    pattern_distance: cfg.pattern_distance,
                };
                let (improved, rep) = emin_pcg(&econfig, &cur_a, &cur_kernel, &proj, &p0)?;
                emin_report = Some(rep);
                emin_stats = Some(setup_stats);
                flagged_rows = improved.flagged_rows();
                improved.to_csr()
            }
        };
        t_improve += improve_start.elapsed().as_secs_f64();
        let coarse_a = galerkin(&cur_a, &p)?;
        let coarse_kernel = NearKernel::new(cur_kernel.gather_rows(cf.c_list()));
        stats.push(LevelStats {
            rows: n,
            nnz,
            coarse_rows: Some(nc),
            tentative_flagged: trep.violating_rows.len(),
            flagged_rows,
            emin: emin_report,
            emin_setup: emin_stats,
        });
        let r = p.transpose();
        levels.push(Level {
            a: cur_a,
            p: Some(p),
            r: Some(r),
            diag,
            kernel: cur_kernel,
        });
        cur_a = coarse_a;
        cur_kernel = coarse_kernel;
    }
    let coarse_solver = Cholesky::factor_sparse(&levels.last().unwrap().a)?;
    let n0 = stats[0].rows as f64;
    let nnz0 = stats[0].nnz as f64;
    let c_gd = stats.iter().map(|s| s.rows as f64).sum::<f64>() / n0;
    let c_op = stats.iter().map(|s| s.nnz as f64).sum::<f64>() / nnz0;
    Ok(Hierarchy {
        levels,
        coarse_solver,
        c_gd,
        c_op,
        level_stats: stats,
        warnings,
        t_setup: start.elapsed().as_secs_f64(),
        t_improve,
        smoother: cfg.smoother,
        jacobi_omega: cfg.jacobi_omega,
    })
}

impl Hierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest_n(&self) -> usize {
        self.levels[0].a.nrows()
    }

    /// One V(1,1) cycle applied to a residual: forward Gauss-Seidel (or
    /// damped Jacobi) down, direct solve at the bottom, backward sweep up.
    /// The sweep pairing keeps the cycle symmetric, so it is a valid SPD
    /// preconditioner for the outer conjugate gradients.
    pub fn vcycle(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.finest_n() {
            return Err(Error::DimensionMismatch("vcycle input length".into()));
        }
        self.cycle_level(0, r)
    }

    fn cycle_level(&self, level: usize, b: &[f64]) -> Result<Vec<f64>> {
        let lvl = &self.levels[level];
        if level + 1 == self.levels.len() {
            return self.coarse_solver.solve(b);
        }
        let n = lvl.a.nrows();
        let mut x = vec![0.0; n];
        self.smooth(lvl, b, &mut x, true)?;
        let ax = lvl.a.spmv(&x)?;
        let r2: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rc = lvl.r.as_ref().unwrap().spmv(&r2)?;
        let ec = self.cycle_level(level + 1, &rc)?;
        let pe = lvl.p.as_ref().unwrap().spmv(&ec)?;
        axpy(1.0, &pe, &mut x);
        self.smooth(lvl, b, &mut x, false)?;
        Ok(x)
    }

    fn smooth(&self, lvl: &Level, b: &[f64], x: &mut [f64], forward: bool) -> Result<()> {
        match self.smoother {
            OuterSmoother::SymmetricGaussSeidel => {
                let n = lvl.a.nrows();
                let order: Box<dyn Iterator<Item = usize>> = if forward {
                    Box::new(0..n)
                } else {
                    Box::new((0..n).rev())
                };
                for i in order {
                    let (cols, vals) = lvl.a.row(i);
                    let mut s = b[i];
                    let mut d = 0.0;
                    for (&j, &v) in cols.iter().zip(vals) {
                        if j == i {
                            d = v;
                        } else {
                            s -= v * x[j];
                        }
                    }
                    x[i] = s / d;
                }
            }
            OuterSmoother::Jacobi => {
                let ax = lvl.a.spmv(x)?;
                for i in 0..x.len() {
                    x[i] += self.jacobi_omega * (b[i] - ax[i]) / lvl.diag[i];
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one outer PCG solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub n_it: usize,
    pub converged: bool,
    pub final_relres: f64,
    pub relres_trace: Vec<f64>,
    pub time_seconds: f64,
}

/// Preconditioned conjugate gradients with the V-cycle as preconditioner.
/// Convergence when ||r||_2 <= tol * ||b||_2; a zero right-hand side returns
/// immediately with the zero solution.
pub fn pcg_solve(
    a: &SparseMatrix,
    b: &[f64],
    h: &Hierarchy,
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch("pcg right-hand side".into()));
    }
    let start = Instant::now();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; b.len()],
            SolveReport {
                n_it: 0,
                converged: true,
                final_relres: 0.0,
                relres_trace: Vec::new(),
                time_seconds: start.elapsed().as_secs_f64(),
            },
        ));
    }
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut z = h.vcycle(&r)?;
    let mut p = z.clone();
    let mut gamma = dot(&r, &z);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut n_it = 0;
    let mut relres = 1.0;
    for k in 1..=maxit {
        let q = a.spmv(&p)?;
        let pq = dot(&p, &q);
        if !pq.is_finite() || pq <= 0.0 {
            return Err(Error::IndefiniteBreakdown {
                iteration: k,
                curvature: pq,
            });
        }
        let alpha = gamma / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        relres = norm2(&r) / bnorm;
        trace.push(relres);
        n_it = k;
        if relres <= tol {
            converged = true;
            break;
        }
        z = h.vcycle(&r)?;
        let gamma_new = dot(&r, &z);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((
        x,
        SolveReport {
            n_it,
            converged,
            final_relres: relres,
            relres_trace: trace,
            time_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}
