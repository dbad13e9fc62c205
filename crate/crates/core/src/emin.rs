//! Constrained energy minimization of the prolongation.
//!
//! The weight vector is the row-major collection of F-row nonzeros of P over
//! a fixed pattern. Minimizing tr(P^T A P) subject to the near-kernel
//! constraint is a projected quadratic problem: the Hessian K acts block
//! diagonally over the columns of P and is applied matrix-free as a masked
//! A*P product, while the constraint projector acts block diagonally over the
//! rows. A restricted PCG drives the energy down and stops on the relative
//! energy decrease.

use crate::coarsening::NearKernel;
use crate::dense::{qr_economy, svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::tentative::Prolongation;
use crate::vector::{axpy, dot};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Preconditioner for the restricted PCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precond {
    /// Row-wise scaling by 1/A(i,i); needs no post-projection.
    Jacobi,
    /// Symmetric Gauss-Seidel over the column blocks of K, projected.
    BlockSgs,
}

/// Configuration of the energy minimizer.
#[derive(Debug, Clone, Copy)]
pub struct EminConfig {
    pub maxit: usize,
    /// Relative energy-decrease tolerance in (0, 1].
    pub tau: f64,
    pub precond: Precond,
    /// Strong-neighbor distance used to enlarge the tentative pattern.
    pub pattern_distance: usize,
}

impl Default for EminConfig {
    fn default() -> Self {
        EminConfig {
            maxit: 10,
            tau: 0.1,
            precond: Precond::Jacobi,
            pattern_distance: 1,
        }
    }
}

impl EminConfig {
    pub fn validate(&self) -> Result<()> {
        if self.maxit < 1 {
            return Err(Error::InvalidConfig("emin maxit must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "emin tau {} outside (0, 1]",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Iteration trace of one energy-minimization run.
#[derive(Debug, Clone, Serialize)]
pub struct EminReport {
    /// Applied PCG iterations.
    #[serde(rename = "n_it_E")]
    pub n_it_e: usize,
    /// Energy decrease per applied iteration (positive magnitudes).
    #[serde(rename = "dE_abs")]
    pub d_e_abs: Vec<f64>,
    /// Energy decrease relative to the first iteration.
    #[serde(rename = "dE_rel")]
    pub d_e_rel: Vec<f64>,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// Relative constraint residual over non-flagged rows after minimization.
    pub constraint_residual: f64,
    pub time_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorMethod {
    Qr,
    Svd,
}

/// Per-row orthonormal block realizing the constraint projector
/// I - Q_i Q_i^T on that row's slice of the weight vector.
#[derive(Debug, Clone)]
pub struct RowProjector {
    pub row: usize,
    pub offset: usize,
    pub width: usize,
    pub rank: usize,
    pub method: FactorMethod,
    pub q: DenseMatrix,
}

/// Block-diagonal orthogonal projector onto the constraint null space,
/// stored row-wise.
#[derive(Debug, Clone)]
pub struct ConstraintProjector {
    rows: Vec<RowProjector>,
    total_nnz: usize,
}

impl ConstraintProjector {
    pub fn rows(&self) -> &[RowProjector] {
        &self.rows
    }

    pub fn total_nnz(&self) -> usize {
        self.total_nnz
    }

    pub fn svd_rows(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.method == FactorMethod::Svd)
            .count()
    }

    /// x <- (I - Q Q^T) x block-wise.
    pub fn apply_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.total_nnz, "projector layout mismatch");
        let mut blocks: Vec<&mut [f64]> = Vec::with_capacity(self.rows.len());
        let mut rest = x;
        for rb in &self.rows {
            let (head, tail) = rest.split_at_mut(rb.width);
            blocks.push(head);
            rest = tail;
        }
        blocks
            .par_iter_mut()
            .zip(self.rows.par_iter())
            .for_each(|(slice, rb)| {
                if rb.rank == 0 {
                    return;
                }
                for t in 0..rb.rank {
                    let col = rb.q.col(t);
                    let d: f64 = col.iter().zip(slice.iter()).map(|(a, b)| a * b).sum();
                    for (s, &qi) in slice.iter_mut().zip(col) {
                        *s -= d * qi;
                    }
                }
            });
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.total_nnz {
            return Err(Error::DimensionMismatch(format!(
                "projector expects length {}, got {}",
                self.total_nnz,
                x.len()
            )));
        }
        let mut y = x.to_vec();
        self.apply_in_place(&mut y);
        Ok(y)
    }
}

/// Statistics from the setup pass.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EminSetupStats {
    /// Rows routed to the SVD branch (these cannot reduce their energy).
    pub svd_rows: usize,
    /// Rows whose constraint stays violated after correction.
    pub flagged_rows: usize,
}

struct SetupRow {
    values: Vec<f64>,
    flagged: bool,
    projector: RowProjector,
}

/// Build the constraint projector over the expanded pattern and correct the
/// tentative weights so every satisfiable row meets its constraint exactly.
///
/// For each F-row the local block L = V_c(J_i, :) is factored: economy QR
/// when the row is tall and full rank (correction Q R^-T r), otherwise a
/// truncated SVD (minimum-norm least squares, Q = U(:, 1..k)).
pub fn emin_setup(
    kernel: &NearKernel,
    what: &Prolongation,
    expanded_pattern: &SparseMatrix,
) -> Result<(ConstraintProjector, Prolongation, EminSetupStats)> {
    let cf = what.cf();
    if expanded_pattern.nrows() != what.nrows() || expanded_pattern.ncols() != what.ncols() {
        return Err(Error::DimensionMismatch(
            "expanded pattern shape mismatch".into(),
        ));
    }
    if kernel.n() != what.nrows() {
        return Err(Error::DimensionMismatch(
            "kernel size does not match prolongation".into(),
        ));
    }
    let m = kernel.modes();
    // The expanded pattern must contain the tentative pattern on F-rows and
    // keep identity C-rows.
    for i in 0..what.nrows() {
        if cf.is_coarse(i) {
            if expanded_pattern.row_cols(i) != [cf.coarse_local(i)] {
                return Err(Error::InvalidStructure(format!(
                    "expanded pattern C-row {i} is not identity"
                )));
            }
        } else {
            let big = expanded_pattern.row_cols(i);
            for c in what.row_support(i) {
                if big.binary_search(c).is_err() {
                    return Err(Error::InvalidStructure(format!(
                        "expanded pattern lost entry ({i},{c}) of the tentative pattern"
                    )));
                }
            }
        }
    }

    let rows: Vec<SetupRow> = cf
        .f_list()
        .par_iter()
        .map(|&i| -> Result<SetupRow> {
            let support = expanded_pattern.row_cols(i);
            let n_l = support.len();
            // Scatter the tentative row into the expanded support.
            let mut w_hat = vec![0.0; n_l];
            for (&c, &v) in what.row_support(i).iter().zip(what.row_values(i)) {
                let pos = support.binary_search(&c).expect("checked above");
                w_hat[pos] = v;
            }
            let globals: Vec<usize> = support.iter().map(|&c| cf.c_list()[c]).collect();
            let local = kernel.gather_rows(&globals); // n_l x m
            let v = kernel.row(i);
            // r = v - L^T w_hat
            let mut r = v.clone();
            for (q, rq) in r.iter_mut().enumerate() {
                for (t, &wt) in w_hat.iter().enumerate() {
                    *rq -= local.get(t, q) * wt;
                }
            }
            let (q_block, rank, method, delta) = if n_l >= m {
                let f = qr_economy(&local)?;
                if f.is_full_rank() {
                    let coeff = f.solve_rt(&r)?;
                    let delta = f.q.matvec(&coeff)?;
                    (f.q, m, FactorMethod::Qr, delta)
                } else {
                    svd_branch(&local, &r)?
                }
            } else {
                svd_branch(&local, &r)?
            };
            let mut values = w_hat;
            for (w, d) in values.iter_mut().zip(&delta) {
                *w += d;
            }
            // Residual after correction decides the violation flag.
            let mut resid = 0.0f64;
            for (q, &vq) in v.iter().enumerate() {
                let mut s = vq;
                for (t, &wt) in values.iter().enumerate() {
                    s -= local.get(t, q) * wt;
                }
                resid += s * s;
            }
            let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            // Rows with no coarse support cannot interpolate and stay
            // flagged even when their constraint is vacuous.
            let flagged = n_l == 0 || resid.sqrt() > 1e-12 * (1.0 + v_norm);
            Ok(SetupRow {
                values,
                flagged,
                projector: RowProjector {
                    row: i,
                    offset: 0, // fixed below
                    width: n_l,
                    rank,
                    method,
                    q: q_block,
                },
            })
        })
        .collect::<Result<_>>()?;

    let n = what.nrows();
    let mut values = Vec::with_capacity(expanded_pattern.nnz());
    let mut flags = vec![false; n];
    let mut projector_rows = Vec::with_capacity(cf.n_fine());
    let mut offset = 0usize;
    let mut stats = EminSetupStats::default();
    for i in 0..n {
        if cf.is_coarse(i) {
            values.push(1.0);
        } else {
            let row = &rows[cf.fine_local(i)];
            values.extend_from_slice(&row.values);
            flags[i] = row.flagged;
            if row.flagged {
                stats.flagged_rows += 1;
            }
            if row.projector.method == FactorMethod::Svd {
                stats.svd_rows += 1;
            }
            let mut rp = row.projector.clone();
            rp.offset = offset;
            offset += rp.width;
            projector_rows.push(rp);
        }
    }
    let projector = ConstraintProjector {
        rows: projector_rows,
        total_nnz: offset,
    };
    let p0 = Prolongation::from_parts(expanded_pattern.to_pattern(), values, cf.clone(), flags)?;
    Ok((projector, p0, stats))
}

fn svd_branch(
    local: &DenseMatrix,
    r: &[f64],
) -> Result<(DenseMatrix, usize, FactorMethod, Vec<f64>)> {
    let f = svd(local)?;
    let k = f.rank();
    let q = DenseMatrix::from_fn(local.nrows(), k, |i, j| f.u.get(i, j));
    let delta = f.solve_transpose_min_norm(r)?;
    Ok((q, k, FactorMethod::Svd, delta))
}

/// Matrix-free action of the block-diagonal energy Hessian K and its
/// preconditioners over a fixed prolongation pattern.
pub struct EminOperator<'a> {
    a: &'a SparseMatrix,
    prol: &'a Prolongation,
    /// 1/A(i,i) per fine-local row.
    inv_diag: Vec<f64>,
    /// Column blocks of the pattern: for each coarse column, the fine rows
    /// holding it and their F-layout positions.
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_fpos: Vec<usize>,
}

impl<'a> EminOperator<'a> {
    pub fn new(a: &'a SparseMatrix, prol: &'a Prolongation) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != prol.nrows() {
            return Err(Error::DimensionMismatch(
                "operator: matrix and prolongation do not conform".into(),
            ));
        }
        let cf = prol.cf();
        let mut inv_diag = Vec::with_capacity(cf.n_fine());
        for &i in cf.f_list() {
            let d = a.get(i, i).unwrap_or(0.0);
            if d == 0.0 {
                return Err(Error::ZeroDiagonal(i));
            }
            inv_diag.push(1.0 / d);
        }
        // CSC-style index of the F-rows of the pattern.
        let nc = prol.ncols();
        let mut counts = vec![0usize; nc + 1];
        for &i in cf.f_list() {
            for &c in prol.row_support(i) {
                counts[c + 1] += 1;
            }
        }
        for c in 0..nc {
            counts[c + 1] += counts[c];
        }
        let total = counts[nc];
        let mut col_rows = vec![0usize; total];
        let mut col_fpos = vec![0usize; total];
        let mut next = counts.clone();
        let mut fpos = 0usize;
        for &i in cf.f_list() {
            for &c in prol.row_support(i) {
                let p = next[c];
                col_rows[p] = i;
                col_fpos[p] = fpos;
                next[c] += 1;
                fpos += 1;
            }
        }
        Ok(EminOperator {
            a,
            prol,
            inv_diag,
            col_ptr: counts,
            col_rows,
            col_fpos,
        })
    }

    pub fn f_nnz(&self) -> usize {
        self.prol.f_nnz()
    }

    fn masked_product(&self, x: &[f64], include_coarse: bool) -> Vec<f64> {
        let cf = self.prol.cf();
        let pattern = self.prol.pattern();
        let blocks: Vec<Vec<f64>> = cf
            .f_list()
            .par_iter()
            .map(|&i| {
                let cols_i = pattern.row_cols(i);
                let mut out = vec![0.0; cols_i.len()];
                let (acols, avals) = self.a.row(i);
                for (&k, &a_ik) in acols.iter().zip(avals) {
                    if cf.is_coarse(k) {
                        if include_coarse {
                            // P(k, c) = 1 exactly at the coarse index of k.
                            let c = cf.coarse_local(k);
                            if let Ok(pos) = cols_i.binary_search(&c) {
                                out[pos] += a_ik * 1.0;
                            }
                        }
                        continue;
                    }
                    let base = self.prol.f_offset(cf.fine_local(k));
                    let cols_k = pattern.row_cols(k);
                    // Merge the sorted supports of row i and row k.
                    let (mut pi, mut pk) = (0usize, 0usize);
                    while pi < cols_i.len() && pk < cols_k.len() {
                        if cols_i[pi] < cols_k[pk] {
                            pi += 1;
                        } else if cols_k[pk] < cols_i[pi] {
                            pk += 1;
                        } else {
                            out[pi] += a_ik * x[base + pk];
                            pi += 1;
                            pk += 1;
                        }
                    }
                }
                out
            })
            .collect();
        let mut y = Vec::with_capacity(self.f_nnz());
        for b in blocks {
            y.extend_from_slice(&b);
        }
        y
    }

    /// y = K x: the energy Hessian applied to an F-layout weight vector,
    /// realized as the A*P product restricted to fine rows and columns and
    /// masked to the fixed pattern.
    pub fn apply_k(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.f_nnz() {
            return Err(Error::DimensionMismatch(format!(
                "apply_k expects length {}, got {}",
                self.f_nnz(),
                x.len()
            )));
        }
        Ok(self.masked_product(x, false))
    }

    /// Right-hand side f of the unconstrained optimum K w = f: at position
    /// (fine row i, coarse column c) the entry is -A(i, node(c)).
    pub fn rhs_f(&self) -> Vec<f64> {
        let cf = self.prol.cf();
        let pattern = self.prol.pattern();
        let blocks: Vec<Vec<f64>> = cf
            .f_list()
            .par_iter()
            .map(|&i| {
                pattern
                    .row_cols(i)
                    .iter()
                    .map(|&c| -self.a.get(i, cf.c_list()[c]).unwrap_or(0.0))
                    .collect()
            })
            .collect();
        let mut f = Vec::with_capacity(self.f_nnz());
        for b in blocks {
            f.extend_from_slice(&b);
        }
        f
    }

    /// Jacobi preconditioning: every entry in fine row i scales by 1/A(i,i)
    /// (the diagonal of K is constant along each row block, so this is the
    /// exact Jacobi preconditioner of the projected operator and needs no
    /// post-projection).
    pub fn precond_jacobi(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.f_nnz() {
            return Err(Error::DimensionMismatch("jacobi layout mismatch".into()));
        }
        let cf = self.prol.cf();
        let mut z = Vec::with_capacity(r.len());
        for (fl, &i) in cf.f_list().iter().enumerate() {
            let width = self.prol.row_support(i).len();
            let base = self.prol.f_offset(fl);
            let d = self.inv_diag[fl];
            for t in 0..width {
                z.push(r[base + t] * d);
            }
        }
        Ok(z)
    }

    /// Projected block-SGS preconditioning z = Pi M_sgs^-1 r.
    pub fn precond_block_sgs(
        &self,
        projector: &ConstraintProjector,
        r: &[f64],
    ) -> Result<Vec<f64>> {
        let mut z = self.block_sgs_raw(r)?;
        if z.len() != projector.total_nnz() {
            return Err(Error::DimensionMismatch(
                "projector does not match pattern".into(),
            ));
        }
        projector.apply_in_place(&mut z);
        Ok(z)
    }

    /// Symmetric Gauss-Seidel over the column blocks of K, matrix-free:
    /// forward solve with the lower triangle of A(I_c, I_c), diagonal scale,
    /// backward solve, block by block in ascending coarse index. The caller
    /// applies the constraint projector afterwards.
    pub fn block_sgs_raw(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.f_nnz() {
            return Err(Error::DimensionMismatch("sgs layout mismatch".into()));
        }
        let nc = self.prol.ncols();
        let mut z = vec![0.0; r.len()];
        let col_results: Vec<(usize, Vec<f64>)> = (0..nc)
            .into_par_iter()
            .map_init(Vec::<f64>::new, |lower, c| {
                let lo = self.col_ptr[c];
                let hi = self.col_ptr[c + 1];
                let rows = &self.col_rows[lo..hi];
                let fpos = &self.col_fpos[lo..hi];
                let nb = rows.len();
                // Gather the lower triangle of A(I_c, I_c) by merging each
                // A-row with the sorted block row list.
                lower.clear();
                lower.resize(nb * (nb + 1) / 2, 0.0);
                for t in 0..nb {
                    let (acols, avals) = self.a.row(rows[t]);
                    let base = t * (t + 1) / 2;
                    let (mut p, mut q) = (0usize, 0usize);
                    while p < acols.len() && q <= t {
                        if acols[p] < rows[q] {
                            p += 1;
                        } else if rows[q] < acols[p] {
                            q += 1;
                        } else {
                            lower[base + q] = avals[p];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                // Forward solve (L + D) u = r_c.
                let mut u = vec![0.0; nb];
                for t in 0..nb {
                    let base = t * (t + 1) / 2;
                    let mut s = r[fpos[t]];
                    for (tt, &utt) in u.iter().enumerate().take(t) {
                        s -= lower[base + tt] * utt;
                    }
                    u[t] = s / lower[base + t];
                }
                // Diagonal scale then backward solve (L + D)^T z = D u.
                let mut zc = vec![0.0; nb];
                for t in (0..nb).rev() {
                    let d = lower[t * (t + 1) / 2 + t];
                    let mut s = d * u[t];
                    for tt in t + 1..nb {
                        s -= lower[tt * (tt + 1) / 2 + t] * zc[tt];
                    }
                    zc[t] = s / d;
                }
                (c, zc)
            })
            .collect();
        for (c, zc) in col_results {
            let lo = self.col_ptr[c];
            for (t, &v) in zc.iter().enumerate() {
                z[self.col_fpos[lo + t]] = v;
            }
        }
        Ok(z)
    }
}

/// Full masked product: the entries of A*P at the F-rows of P's own pattern,
/// in row-major order. Summation follows the stored order of each A-row, so
/// the result matches a gather from `spmm(A, P)` bit for bit.
pub fn masked_spmm(a: &SparseMatrix, prol: &Prolongation) -> Result<Vec<f64>> {
    let op = EminOperator::new(a, prol)?;
    Ok(op.masked_product(&prol.f_values(), true))
}

/// Prolongation energy tr(P^T A P), evaluated column by column through the
/// product A*P without forming the triple product.
pub fn energy_of(a: &SparseMatrix, p: &SparseMatrix) -> Result<f64> {
    if a.ncols() != p.nrows() {
        return Err(Error::DimensionMismatch("energy_of shapes".into()));
    }
    let ap = a.spmm(p)?;
    let mut total = 0.0f64;
    for i in 0..p.nrows() {
        let (pc, pv) = p.row(i);
        let (qc, qv) = ap.row(i);
        let mut qpos = 0usize;
        let mut acc = 0.0f64;
        for (&c, &v) in pc.iter().zip(pv) {
            while qpos < qc.len() && qc[qpos] < c {
                qpos += 1;
            }
            if qpos < qc.len() && qc[qpos] == c {
                acc += v * qv[qpos];
            }
        }
        total += acc;
    }
    Ok(total)
}

/// Stack of per-row constraint actions L_i^T x_i (m entries per F-row).
pub fn apply_constraint_transpose(
    kernel: &NearKernel,
    prol: &Prolongation,
    x: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != prol.f_nnz() {
        return Err(Error::DimensionMismatch(
            "constraint transpose layout".into(),
        ));
    }
    let cf = prol.cf();
    let m = kernel.modes();
    let mut out = Vec::with_capacity(cf.n_fine() * m);
    for (fl, &i) in cf.f_list().iter().enumerate() {
        let base = prol.f_offset(fl);
        let support = prol.row_support(i);
        for q in 0..m {
            let mut s = 0.0;
            for (t, &c) in support.iter().enumerate() {
                s += kernel.matrix().get(cf.c_list()[c], q) * x[base + t];
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// Relative constraint residual ||B^T w - g|| / ||g|| over non-flagged rows.
pub fn constraint_residual(kernel: &NearKernel, prol: &Prolongation) -> f64 {
    let cf = prol.cf();
    let mut resid2 = 0.0f64;
    let mut g2 = 0.0f64;
    for &i in cf.f_list() {
        if prol.is_flagged(i) {
            continue;
        }
        let v = kernel.row(i);
        let mut row2 = 0.0;
        for (q, &vq) in v.iter().enumerate() {
            let mut s = vq;
            for (&c, &w) in prol.row_support(i).iter().zip(prol.row_values(i)) {
                s -= kernel.matrix().get(cf.c_list()[c], q) * w;
            }
            row2 += s * s;
        }
        resid2 += row2;
        g2 += v.iter().map(|x| x * x).sum::<f64>();
    }
    if g2 == 0.0 {
        resid2.sqrt()
    } else {
        (resid2 / g2).sqrt()
    }
}

/// Restricted PCG on the projected system: starting from a zero correction,
/// iterate z = Pi M^-1 r, gamma = r^T z, direction update, alpha = gamma /
/// (y^T Pi K y), with the energy decrease dE_k = gamma * alpha; stop once
/// dE_k < tau * dE_1 or maxit. Returns the improved prolongation and the
/// iteration trace.
pub fn emin_pcg(
    cfg: &EminConfig,
    a: &SparseMatrix,
    kernel: &NearKernel,
    projector: &ConstraintProjector,
    p0: &Prolongation,
) -> Result<(Prolongation, EminReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let op = EminOperator::new(a, p0)?;
    if projector.total_nnz() != op.f_nnz() {
        return Err(Error::DimensionMismatch(
            "projector does not match pattern".into(),
        ));
    }
    let energy_initial = energy_of(a, &p0.to_csr())?;
    let w0 = p0.f_values();
    let f = op.rhs_f();
    let kw0 = op.apply_k(&w0)?;
    // Projected initial residual of K dw = f - K w0 restricted to the
    // constraint null space.
    let mut r: Vec<f64> = f.iter().zip(&kw0).map(|(a, b)| a - b).collect();
    projector.apply_in_place(&mut r);

    let mut dw = vec![0.0; op.f_nnz()];
    let mut y: Vec<f64> = Vec::new();
    let mut gamma_old = 0.0f64;
    let mut d_e_abs: Vec<f64> = Vec::new();
    let mut d_e_1 = 0.0f64;
    let mut n_it = 0usize;

    for k in 1..=cfg.maxit {
        let z = match cfg.precond {
            Precond::Jacobi => {
                let z = op.precond_jacobi(&r)?;
                #[cfg(debug_assertions)]
                {
                    // The Jacobi path may skip the post-projection only
                    // because the scaled residual stays in the null space.
                    let zp = projector.apply(&z)?;
                    let diff: f64 = z
                        .iter()
                        .zip(&zp)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let scale: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    debug_assert!(
                        diff <= 1e-12 * (1.0 + scale),
                        "jacobi projection skip violated: {diff:e} vs scale {scale:e}"
                    );
                }
                z
            }
            Precond::BlockSgs => op.precond_block_sgs(projector, &r)?,
        };
        let gamma = dot(&r, &z);
        if !gamma.is_finite() {
            return Err(Error::NonFinite(format!(
                "gamma at energy-minimization iteration {k}"
            )));
        }
        if gamma < 0.0 {
            // r^T M^-1 r < 0 is impossible for an SPD system.
            return Err(Error::IndefiniteBreakdown {
                iteration: k,
                curvature: gamma,
            });
        }
        if gamma == 0.0 {
            if k == 1 {
                // Residual already zero: the tentative operator is energy
                // minimal within its pattern.
                n_it = 1;
                d_e_abs.push(0.0);
                d_e_1 = 0.0;
            }
            break;
        }
        if k == 1 {
            y = z;
        } else {
            let beta = gamma / gamma_old;
            for (yi, zi) in y.iter_mut().zip(&z) {
                *yi = zi + beta * *yi;
            }
        }
        gamma_old = gamma;
        let ky = op.apply_k(&y)?;
        let mut y_breve = ky;
        projector.apply_in_place(&mut y_breve);
        let denom = dot(&y, &y_breve);
        if !denom.is_finite() || denom <= 0.0 {
            return Err(Error::IndefiniteBreakdown {
                iteration: k,
                curvature: denom,
            });
        }
        let alpha = gamma / denom;
        let d_e = gamma * alpha;
        if k == 1 {
            d_e_1 = d_e;
        }
        if d_e < cfg.tau * d_e_1 {
            break;
        }
        axpy(alpha, &y, &mut dw);
        axpy(-alpha, &y_breve, &mut r);
        d_e_abs.push(d_e);
        n_it = k;
    }

    let mut w = w0;
    axpy(1.0, &dw, &mut w);
    let mut improved = p0.clone();
    improved.set_f_values(&w)?;
    let energy_final = energy_of(a, &improved.to_csr())?;
    let d_e_rel = if d_e_1 > 0.0 {
        d_e_abs.iter().map(|&x| x / d_e_1).collect()
    } else {
        vec![1.0; d_e_abs.len()]
    };
    let report = EminReport {
        n_it_e: n_it,
        d_e_abs,
        d_e_rel,
        energy_initial,
        energy_final,
        constraint_residual: constraint_residual(kernel, &improved),
        time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((improved, report))
}
