//! C ABI for the solver: opaque handles, integer status codes, and plain
//! buffers. Every function is callable from C through the generated
//! `include/eminamg.h`.

use eminamg::coarsening::NearKernel;
use eminamg::dense::DenseMatrix;
use eminamg::solver::{build_hierarchy, pcg_solve, BuildConfig, Hierarchy, Variant};
use eminamg::sparse::SparseMatrix;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

/// Status code returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EminamgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IoError = 3,
    NumericError = 4,
    NotConverged = 5,
}

/// Opaque sparse-matrix handle.
#[repr(C)]
pub struct EminamgMatrix {
    _private: [u8; 0],
}

/// Opaque solver handle (hierarchy plus the fine-level operator).
#[repr(C)]
pub struct EminamgSolver {
    _private: [u8; 0],
}

/// Prolongation-improvement selector for `EminamgOptions`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EminamgVariant {
    Tentative = 0,
    Smoothed = 1,
    EminJacobi = 2,
    EminSgs = 3,
}

/// Hierarchy construction options; obtain defaults from
/// `eminamg_options_default` and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EminamgOptions {
    pub variant: EminamgVariant,
    /// Energy-minimization iterations per level (EminJacobi / EminSgs).
    pub emin_iterations: usize,
    /// Strength-of-connection threshold in [0, 1).
    pub theta: f64,
    /// Relative energy-decrease stopping tolerance in (0, 1].
    pub tau: f64,
    /// Strong-neighbor distance for the energy-minimization pattern.
    pub pattern_distance: usize,
    /// Maximum interpolation distance of the tentative setup.
    pub lmax: usize,
    /// Seed for the coarsening random weights.
    pub seed: u64,
    /// Direct-solve threshold for the coarsest level.
    pub coarse_size: usize,
    pub max_levels: usize,
}

struct MatrixInner {
    a: SparseMatrix,
}

struct SolverInner {
    a: SparseMatrix,
    hierarchy: Hierarchy,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &eminamg::Error) -> EminamgStatus {
    match err {
        eminamg::Error::Io(_) | eminamg::Error::MatrixMarket { .. } => EminamgStatus::IoError,
        eminamg::Error::InvalidConfig(_)
        | eminamg::Error::DimensionMismatch(_)
        | eminamg::Error::IndexOutOfBounds(_)
        | eminamg::Error::InvalidStructure(_) => EminamgStatus::InvalidArgument,
        _ => EminamgStatus::NumericError,
    }
}

fn fail(err: eminamg::Error) -> EminamgStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eminamg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn eminamg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Default hierarchy options: energy minimization with the Jacobi
/// preconditioner, two iterations, theta 0.25.
#[no_mangle]
pub extern "C" fn eminamg_options_default() -> EminamgOptions {
    EminamgOptions {
        variant: EminamgVariant::EminJacobi,
        emin_iterations: 2,
        theta: 0.25,
        tau: 0.1,
        pattern_distance: 1,
        lmax: 3,
        seed: 42,
        coarse_size: 500,
        max_levels: 25,
    }
}

/// Read a Matrix Market file into a new matrix handle.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success `*out` owns the matrix and must be released with
/// `eminamg_matrix_free`.
#[no_mangle]
pub unsafe extern "C" fn eminamg_matrix_read_mm(
    path: *const c_char,
    out: *mut *mut EminamgMatrix,
) -> EminamgStatus {
    if path.is_null() || out.is_null() {
        set_error("null pointer argument");
        return EminamgStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return EminamgStatus::InvalidArgument;
        }
    };
    match eminamg::mm_read(path) {
        Ok(a) => {
            *out = Box::into_raw(Box::new(MatrixInner { a })) as *mut EminamgMatrix;
            EminamgStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Build a matrix handle from CSR arrays (values copied).
///
/// # Safety
/// `row_offsets` must hold `nrows + 1` entries, `col_indices` and `values`
/// must hold `row_offsets[nrows]` entries each, and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn eminamg_matrix_from_csr(
    nrows: usize,
    ncols: usize,
    row_offsets: *const usize,
    col_indices: *const usize,
    values: *const f64,
    out: *mut *mut EminamgMatrix,
) -> EminamgStatus {
    if row_offsets.is_null() || col_indices.is_null() || values.is_null() || out.is_null() {
        set_error("null pointer argument");
        return EminamgStatus::NullPointer;
    }
    let offsets = std::slice::from_raw_parts(row_offsets, nrows + 1).to_vec();
    let nnz = offsets[nrows];
    let cols = std::slice::from_raw_parts(col_indices, nnz).to_vec();
    let vals = std::slice::from_raw_parts(values, nnz).to_vec();
    if vals.iter().any(|v| !v.is_finite()) {
        set_error("matrix values must be finite");
        return EminamgStatus::InvalidArgument;
    }
    match SparseMatrix::new(nrows, ncols, offsets, cols, vals) {
        Ok(a) => {
            *out = Box::into_raw(Box::new(MatrixInner { a })) as *mut EminamgMatrix;
            EminamgStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Write a matrix handle to a Matrix Market file.
///
/// # Safety
/// `matrix` must be a live handle from this library and `path` a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eminamg_matrix_write_mm(
    matrix: *const EminamgMatrix,
    path: *const c_char,
) -> EminamgStatus {
    if matrix.is_null() || path.is_null() {
        set_error("null pointer argument");
        return EminamgStatus::NullPointer;
    }
    let inner = &*(matrix as *const MatrixInner);
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("path is not valid UTF-8");
            return EminamgStatus::InvalidArgument;
        }
    };
    match eminamg::mm_write(path, &inner.a) {
        Ok(()) => EminamgStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eminamg_matrix_nrows(matrix: *const EminamgMatrix) -> usize {
    if matrix.is_null() {
        return 0;
    }
    (*(matrix as *const MatrixInner)).a.nrows()
}

/// Number of stored nonzeros, or 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eminamg_matrix_nnz(matrix: *const EminamgMatrix) -> usize {
    if matrix.is_null() {
        return 0;
    }
    (*(matrix as *const MatrixInner)).a.nnz()
}

/// Release a matrix handle. Null is ignored.
///
/// # Safety
/// `matrix` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn eminamg_matrix_free(matrix: *mut EminamgMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix as *mut MatrixInner));
    }
}

/// Build the multigrid solver for an SPD matrix.
///
/// `nullspace` may be null (constant near kernel) or point to an
/// `nrows x modes` column-major block of near-kernel vectors.
///
/// # Safety
/// `matrix` must be a live handle; `options` null or valid; `nullspace`
/// null or holding `nrows * modes` doubles; `out` valid. On success `*out`
/// must be released with `eminamg_solver_free`.
#[no_mangle]
pub unsafe extern "C" fn eminamg_solver_create(
    matrix: *const EminamgMatrix,
    options: *const EminamgOptions,
    nullspace: *const f64,
    modes: usize,
    out: *mut *mut EminamgSolver,
) -> EminamgStatus {
    if matrix.is_null() || out.is_null() {
        set_error("null pointer argument");
        return EminamgStatus::NullPointer;
    }
    let inner = &*(matrix as *const MatrixInner);
    let opts = if options.is_null() {
        eminamg_options_default()
    } else {
        *options
    };
    let n = inner.a.nrows();
    let kernel = if nullspace.is_null() {
        NearKernel::new(DenseMatrix::from_fn(n, 1, |_, _| 1.0))
    } else {
        if modes == 0 {
            set_error("modes must be positive when a nullspace is supplied");
            return EminamgStatus::InvalidArgument;
        }
        let data = std::slice::from_raw_parts(nullspace, n * modes).to_vec();
        match DenseMatrix::from_column_major(n, modes, data) {
            Ok(v) => NearKernel::new(v),
            Err(e) => return fail(e),
        }
    };
    let variant = match opts.variant {
        EminamgVariant::Tentative => Variant::Tentative,
        EminamgVariant::Smoothed => Variant::Smoothed,
        EminamgVariant::EminJacobi => Variant::EminJacobi(opts.emin_iterations.max(1)),
        EminamgVariant::EminSgs => Variant::EminSgs(opts.emin_iterations.max(1)),
    };
    let cfg = BuildConfig {
        variant,
        theta: opts.theta,
        seed: opts.seed,
        l_max: opts.lmax,
        pattern_distance: opts.pattern_distance,
        tau: opts.tau,
        coarse_size: opts.coarse_size,
        max_levels: opts.max_levels,
        ..BuildConfig::default()
    };
    match build_hierarchy(inner.a.clone(), kernel, &cfg) {
        Ok(hierarchy) => {
            let solver = SolverInner {
                a: inner.a.clone(),
                hierarchy,
            };
            *out = Box::into_raw(Box::new(solver)) as *mut EminamgSolver;
            EminamgStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of levels in a solver hierarchy, or 0 for a null handle.
///
/// # Safety
/// `solver` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eminamg_solver_levels(solver: *const EminamgSolver) -> usize {
    if solver.is_null() {
        return 0;
    }
    (*(solver as *const SolverInner)).hierarchy.n_levels()
}

/// Operator complexity of the hierarchy, or 0 for a null handle.
///
/// # Safety
/// `solver` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn eminamg_solver_operator_complexity(solver: *const EminamgSolver) -> f64 {
    if solver.is_null() {
        return 0.0;
    }
    (*(solver as *const SolverInner)).hierarchy.c_op
}

/// Solve A x = b by V-cycle-preconditioned conjugate gradients.
///
/// Convergence is reached when the residual 2-norm falls below
/// `tol * ||b||`. Returns `NotConverged` when the iteration cap is hit; `x`
/// then still holds the best iterate, and `*iterations` the count.
///
/// # Safety
/// `solver` must be a live handle; `b` and `x` must each hold `n` doubles
/// where `n` is the matrix size; `iterations` may be null.
#[no_mangle]
pub unsafe extern "C" fn eminamg_solver_solve(
    solver: *const EminamgSolver,
    b: *const f64,
    x: *mut f64,
    tol: f64,
    max_iterations: usize,
    iterations: *mut usize,
) -> EminamgStatus {
    if solver.is_null() || b.is_null() || x.is_null() {
        set_error("null pointer argument");
        return EminamgStatus::NullPointer;
    }
    let inner = &*(solver as *const SolverInner);
    let n = inner.a.nrows();
    let rhs = std::slice::from_raw_parts(b, n);
    match pcg_solve(&inner.a, rhs, &inner.hierarchy, tol, max_iterations) {
        Ok((sol, report)) => {
            std::ptr::copy_nonoverlapping(sol.as_ptr(), x, n);
            if !iterations.is_null() {
                *iterations = report.n_it;
            }
            if report.converged {
                EminamgStatus::Ok
            } else {
                set_error("iteration cap reached before convergence");
                EminamgStatus::NotConverged
            }
        }
        Err(e) => fail(e),
    }
}

/// Release a solver handle. Null is ignored.
///
/// # Safety
/// `solver` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn eminamg_solver_free(solver: *mut EminamgSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver as *mut SolverInner));
    }
}
