//! Tentative prolongation: a sparse interpolant whose rows satisfy the
//! near-kernel constraint exactly wherever the coarse neighborhood allows it.
//!
//! Each fine row grows its strong neighborhood one distance at a time, picks
//! the best square column subset of the local constraint block by maximal
//! volume, and accepts the row once the local system is solved to roundoff.
//! Rows that cannot be satisfied within the distance budget fall back to a
//! least-squares fit and are flagged.

use crate::coarsening::{CfSplitting, NearKernel, StrengthGraph};
use crate::dense::{svd, DenseMatrix, RANK_TOL};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use rayon::prelude::*;

/// Sparse prolongation P = [W; I] with a fixed pattern: every C-row holds a
/// single unit entry at its own coarse index, F-row values live in row-major
/// order over the pattern.
#[derive(Debug, Clone)]
pub struct Prolongation {
    pattern: SparseMatrix,
    values: Vec<f64>,
    cf: CfSplitting,
    flagged: Vec<bool>,
    /// Offset of each F-row (in fine-local order) into the F-layout vector,
    /// plus a trailing total.
    f_offsets: Vec<usize>,
}

impl Prolongation {
    pub fn from_parts(
        pattern: SparseMatrix,
        values: Vec<f64>,
        cf: CfSplitting,
        flagged: Vec<bool>,
    ) -> Result<Self> {
        if pattern.nrows() != cf.n() || pattern.ncols() != cf.n_coarse() {
            return Err(Error::DimensionMismatch(format!(
                "prolongation pattern {}x{} does not match splitting ({} nodes, {} coarse)",
                pattern.nrows(),
                pattern.ncols(),
                cf.n(),
                cf.n_coarse()
            )));
        }
        if values.len() != pattern.nnz() {
            return Err(Error::DimensionMismatch(
                "prolongation values length != pattern nnz".into(),
            ));
        }
        if flagged.len() != cf.n() {
            return Err(Error::DimensionMismatch(
                "flag vector length != number of nodes".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prolongation values".into()));
        }
        for &c in cf.c_list() {
            let cols = pattern.row_cols(c);
            let lo = pattern.row_offsets()[c];
            if cols != [cf.coarse_local(c)] || values[lo] != 1.0 {
                return Err(Error::InvalidStructure(format!(
                    "C-row {c} must hold exactly one unit entry at its coarse index"
                )));
            }
        }
        for (i, &fl) in flagged.iter().enumerate() {
            if fl && cf.is_coarse(i) {
                return Err(Error::InvalidStructure(format!(
                    "C-row {i} cannot be constraint violating"
                )));
            }
            if !fl && !cf.is_coarse(i) && pattern.row_cols(i).is_empty() {
                return Err(Error::InvalidStructure(format!(
                    "F-row {i} has empty support but is not flagged"
                )));
            }
        }
        let mut f_offsets = Vec::with_capacity(cf.n_fine() + 1);
        f_offsets.push(0);
        let mut total = 0usize;
        for &i in cf.f_list() {
            total += pattern.row_cols(i).len();
            f_offsets.push(total);
        }
        Ok(Prolongation {
            pattern,
            values,
            cf,
            flagged,
            f_offsets,
        })
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols()
    }

    pub fn pattern(&self) -> &SparseMatrix {
        &self.pattern
    }

    pub fn cf(&self) -> &CfSplitting {
        &self.cf
    }

    pub fn is_flagged(&self, row: usize) -> bool {
        self.flagged[row]
    }

    pub fn flagged_rows(&self) -> Vec<usize> {
        (0..self.nrows()).filter(|&i| self.flagged[i]).collect()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flagged
    }

    /// Column support of row i (coarse indices, ascending).
    pub fn row_support(&self, i: usize) -> &[usize] {
        self.pattern.row_cols(i)
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        let lo = self.pattern.row_offsets()[i];
        let hi = self.pattern.row_offsets()[i + 1];
        &self.values[lo..hi]
    }

    /// Number of F-row nonzeros: the length of the weight vector the energy
    /// minimizer works on.
    pub fn f_nnz(&self) -> usize {
        *self.f_offsets.last().unwrap()
    }

    /// Offset of fine-local row `fl` in the F-layout vector.
    pub fn f_offset(&self, fl: usize) -> usize {
        self.f_offsets[fl]
    }

    /// Gather the F-row values in row-major order (ascending fine row, then
    /// column order): the weight vector the energy minimizer works on.
    pub fn f_values(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.f_nnz());
        for &i in self.cf.f_list() {
            w.extend_from_slice(self.row_values(i));
        }
        w
    }

    /// Scatter an F-layout weight vector back into the stored values.
    pub fn set_f_values(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.f_nnz() {
            return Err(Error::DimensionMismatch(
                "F-layout vector length mismatch".into(),
            ));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prolongation update".into()));
        }
        let mut pos = 0usize;
        for &i in self.cf.f_list() {
            let lo = self.pattern.row_offsets()[i];
            let hi = self.pattern.row_offsets()[i + 1];
            let len = hi - lo;
            self.values[lo..hi].copy_from_slice(&w[pos..pos + len]);
            pos += len;
        }
        Ok(())
    }

    /// Assemble the prolongation as a plain CSR operator.
    pub fn to_csr(&self) -> SparseMatrix {
        SparseMatrix::new(
            self.pattern.nrows(),
            self.pattern.ncols(),
            self.pattern.row_offsets().to_vec(),
            self.pattern.col_indices().to_vec(),
            self.values.clone(),
        )
        .expect("prolongation state is structurally valid")
    }
}

/// Outcome summary of the tentative setup.
#[derive(Debug, Clone, Default)]
pub struct TentativeReport {
    /// F-rows that could not satisfy the constraint within `l_max` and were
    /// written with the least-squares fallback.
    pub violating_rows: Vec<usize>,
    /// Distance actually used per satisfied F-row, indexed by fine-local row.
    pub level_used: Vec<usize>,
}

/// Subset-count bound below which the selection is found by exhaustive
/// enumeration; tiny blocks then attain the true maximum volume, which the
/// swap-based local search cannot guarantee.
const MAX_VOL_EXHAUSTIVE_LIMIT: usize = 200;

/// Select `m` columns of the m x n block `b` so the square subblock has
/// locally maximal |det|. Small blocks (at most `MAX_VOL_EXHAUSTIVE_LIMIT`
/// subsets) are enumerated exhaustively; larger ones use greedy pivoted
/// selection followed by single-column swap passes until no swap improves
/// |det| by more than a factor 1 + 1e-9. Ties break toward the lowest column
/// index. Errors with `RankDeficient` when the block has rank below m.
pub fn max_vol_select(b: &DenseMatrix, m: usize) -> Result<Vec<usize>> {
    let ncand = b.ncols();
    if b.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "max_vol_select expects {m} rows, got {}",
            b.nrows()
        )));
    }
    if ncand < m {
        return Err(Error::RankDeficient(format!(
            "only {ncand} candidate columns for {m} modes"
        )));
    }
    // Greedy pivoted pass: repeatedly take the column with the largest
    // residual after projecting out the span of the chosen ones.
    let mut resid: Vec<Vec<f64>> = (0..ncand).map(|j| b.col(j).to_vec()).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut taken = vec![false; ncand];
    let mut first_pivot = 0.0f64;
    for step in 0..m {
        let mut best = usize::MAX;
        let mut best_norm = -1.0f64;
        for (j, r) in resid.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let nrm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if step == 0 {
            first_pivot = best_norm;
        }
        if best == usize::MAX || best_norm <= RANK_TOL * first_pivot {
            return Err(Error::RankDeficient(format!(
                "pivot {best_norm:e} below tolerance at step {step}"
            )));
        }
        taken[best] = true;
        chosen.push(best);
        let q: Vec<f64> = resid[best].iter().map(|x| x / best_norm).collect();
        for (j, r) in resid.iter_mut().enumerate() {
            if taken[j] {
                continue;
            }
            let d: f64 = q.iter().zip(r.iter()).map(|(a, c)| a * c).sum();
            for (ri, qi) in r.iter_mut().zip(&q) {
                *ri -= d * qi;
            }
        }
    }
    chosen.sort_unstable();
    let mut best_log = log_abs_det(&gather_square(b, &chosen))
        .ok_or_else(|| Error::RankDeficient("greedy selection is singular".into()))?;
    if binomial_capped(ncand, m, MAX_VOL_EXHAUSTIVE_LIMIT) <= MAX_VOL_EXHAUSTIVE_LIMIT {
        // Enumerate every subset; only strict improvements replace the
        // greedy pick, so ties resolve deterministically.
        let mut subset: Vec<usize> = (0..m).collect();
        loop {
            if let Some(l) = log_abs_det(&gather_square(b, &subset)) {
                if l > best_log {
                    best_log = l;
                    chosen = subset.clone();
                }
            }
            // Advance to the next combination.
            let mut i = m;
            loop {
                if i == 0 {
                    return Ok(chosen);
                }
                i -= 1;
                if subset[i] + (m - i) < ncand {
                    subset[i] += 1;
                    for j in i + 1..m {
                        subset[j] = subset[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
    // Steepest-ascent swap passes.
    let gain = (1.0 + 1e-9f64).ln();
    for _pass in 0..100 {
        let mut best_swap: Option<(usize, usize, f64)> = None;
        for slot in 0..m {
            for cand in 0..ncand {
                if chosen.contains(&cand) {
                    continue;
                }
                let mut trial = chosen.clone();
                trial[slot] = cand;
                trial.sort_unstable();
                if let Some(l) = log_abs_det(&gather_square(b, &trial)) {
                    if l > best_log + gain && best_swap.map(|(_, _, bl)| l > bl).unwrap_or(true) {
                        best_swap = Some((slot, cand, l));
                    }
                }
            }
        }
        match best_swap {
            Some((slot, cand, l)) => {
                chosen[slot] = cand;
                chosen.sort_unstable();
                best_log = l;
            }
            None => break,
        }
    }
    Ok(chosen)
}

fn gather_square(b: &DenseMatrix, cols: &[usize]) -> DenseMatrix {
    DenseMatrix::from_fn(b.nrows(), cols.len(), |i, j| b.get(i, cols[j]))
}

/// Binomial coefficient, saturating just above `cap`.
fn binomial_capped(n: usize, k: usize, cap: usize) -> usize {
    let mut b = 1usize;
    for i in 0..k {
        b = b.saturating_mul(n - i) / (i + 1);
        if b > cap {
            return cap + 1;
        }
    }
    b
}

/// ln |det| via LU with partial pivoting; None when singular.
fn log_abs_det(a: &DenseMatrix) -> Option<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut acc = 0.0f64;
    for k in 0..n {
        let mut piv = k;
        let mut pmax = m.get(k, k).abs();
        for i in k + 1..n {
            let v = m.get(i, k).abs();
            if v > pmax {
                pmax = v;
                piv = i;
            }
        }
        if pmax == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let a = m.get(k, j);
                let b = m.get(piv, j);
                m.set(k, j, b);
                m.set(piv, j, a);
            }
        }
        acc += m.get(k, k).abs().ln();
        for i in k + 1..n {
            let f = m.get(i, k) / m.get(k, k);
            for j in k + 1..n {
                let v = m.get(i, j) - f * m.get(k, j);
                m.set(i, j, v);
            }
        }
    }
    Some(acc)
}

/// Solve the square system a x = rhs by LU with partial pivoting.
fn lu_solve(a: &DenseMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut b = rhs.to_vec();
    for k in 0..n {
        let mut piv = k;
        let mut pmax = m.get(k, k).abs();
        for i in k + 1..n {
            let v = m.get(i, k).abs();
            if v > pmax {
                pmax = v;
                piv = i;
            }
        }
        if pmax == 0.0 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                let x = m.get(k, j);
                let y = m.get(piv, j);
                m.set(k, j, y);
                m.set(piv, j, x);
            }
            b.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m.get(i, k) / m.get(k, k);
            m.set(i, k, 0.0);
            for j in k + 1..n {
                let v = m.get(i, j) - f * m.get(k, j);
                m.set(i, j, v);
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= m.get(i, j) * x[j];
        }
        x[i] = s / m.get(i, i);
    }
    Some(x)
}

/// Strong neighbors of `start` up to the given distance, grouped so callers
/// can consume one distance ring at a time. `seen` is a reusable scratch
/// marker of length n; it comes back cleared.
fn strong_neighborhood(
    s: &StrengthGraph,
    start: usize,
    l_max: usize,
    seen: &mut [bool],
) -> Vec<Vec<usize>> {
    seen[start] = true;
    let mut rings: Vec<Vec<usize>> = Vec::with_capacity(l_max);
    let mut frontier = vec![start];
    for l in 1..=l_max {
        let mut next = Vec::new();
        for &u in &frontier {
            for &v in s.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        rings.push(next.clone());
        if rings[l - 1].is_empty() {
            break;
        }
        frontier = next;
    }
    seen[start] = false;
    for ring in &rings {
        for &v in ring {
            seen[v] = false;
        }
    }
    rings
}

struct RowResult {
    support: Vec<usize>,
    values: Vec<f64>,
    flagged: bool,
    level: usize,
}

/// Build the tentative prolongation row by row (Algorithm: adaptive
/// interpolation-distance growth with max-vol column selection).
pub fn ptent_setup(
    s: &StrengthGraph,
    kernel: &NearKernel,
    cf: &CfSplitting,
    l_max: usize,
) -> Result<(Prolongation, TentativeReport)> {
    if l_max < 1 {
        return Err(Error::InvalidConfig("l_max must be at least 1".into()));
    }
    if kernel.n() != cf.n() || s.n() != cf.n() {
        return Err(Error::DimensionMismatch(
            "strength graph, kernel and splitting sizes differ".into(),
        ));
    }
    kernel.check_independent()?;
    let m = kernel.modes();
    let results: Vec<RowResult> = cf
        .f_list()
        .par_iter()
        .map_init(
            || vec![false; cf.n()],
            |seen, &i| build_row(s, kernel, cf, i, m, l_max, seen),
        )
        .collect();
    // Assemble pattern and values over all rows.
    let n = cf.n();
    let mut rows: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(n);
    let mut flagged = vec![false; n];
    let mut report = TentativeReport {
        violating_rows: Vec::new(),
        level_used: Vec::with_capacity(cf.n_fine()),
    };
    let mut values: Vec<f64> = Vec::new();
    for i in 0..n {
        if cf.is_coarse(i) {
            rows.push((vec![cf.coarse_local(i)], vec![1.0]));
        } else {
            let r = &results[cf.fine_local(i)];
            if r.flagged {
                flagged[i] = true;
                report.violating_rows.push(i);
            }
            report.level_used.push(r.level);
            rows.push((r.support.clone(), r.values.clone()));
        }
    }
    let pattern_rows: Vec<(Vec<usize>, Vec<f64>)> = rows
        .iter()
        .map(|(c, v)| {
            values.extend_from_slice(v);
            (c.clone(), vec![1.0; c.len()])
        })
        .collect();
    let pattern = SparseMatrix::from_sorted_rows(n, cf.n_coarse(), pattern_rows);
    let prol = Prolongation::from_parts(pattern, values, cf.clone(), flagged)?;
    Ok((prol, report))
}

fn build_row(
    s: &StrengthGraph,
    kernel: &NearKernel,
    cf: &CfSplitting,
    i: usize,
    m: usize,
    l_max: usize,
    seen: &mut [bool],
) -> RowResult {
    let v = kernel.row(i);
    let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-12 * (1.0 + v_norm);
    let rings = strong_neighborhood(s, i, l_max, seen);
    let mut coarse: Vec<usize> = Vec::new();
    for (ring_idx, ring) in rings.iter().enumerate() {
        let l = ring_idx + 1;
        let before = coarse.len();
        coarse.extend(ring.iter().copied().filter(|&u| cf.is_coarse(u)));
        if coarse.len() == before && l > 1 {
            continue;
        }
        if coarse.len() < m {
            continue;
        }
        // Constraint block with columns indexed by candidate coarse nodes:
        // row q holds mode q sampled at each candidate.
        let block = DenseMatrix::from_fn(m, coarse.len(), |q, j| kernel.matrix().get(coarse[j], q));
        let sel = match max_vol_select(&block, m) {
            Ok(sel) => sel,
            Err(_) => continue,
        };
        let square = gather_square(&block, &sel);
        let w = match lu_solve(&square, &v) {
            Some(w) => w,
            None => continue,
        };
        let mut resid = 0.0f64;
        for q in 0..m {
            let mut s_ = v[q];
            for (t, &wt) in w.iter().enumerate() {
                s_ -= square.get(q, t) * wt;
            }
            resid += s_ * s_;
        }
        if resid.sqrt() <= tol {
            let support: Vec<usize> = sel.iter().map(|&j| cf.coarse_local(coarse[j])).collect();
            // `coarse` holds ascending globals per ring, but rings arrive in
            // distance order, so sort support and values together.
            let mut idx: Vec<usize> = (0..support.len()).collect();
            idx.sort_by_key(|&t| support[t]);
            return RowResult {
                support: idx.iter().map(|&t| support[t]).collect(),
                values: idx.iter().map(|&t| w[t]).collect(),
                flagged: false,
                level: l,
            };
        }
    }
    // Fallback: least-squares fit over the full distance-l_max coarse
    // neighborhood; the row is flagged as constraint violating.
    let mut all_coarse: Vec<usize> = rings
        .iter()
        .flatten()
        .copied()
        .filter(|&u| cf.is_coarse(u))
        .collect();
    all_coarse.sort_unstable();
    all_coarse.dedup();
    if all_coarse.is_empty() {
        return RowResult {
            support: Vec::new(),
            values: Vec::new(),
            flagged: true,
            level: l_max,
        };
    }
    let local = kernel.gather_rows(&all_coarse);
    let w = match svd(&local).and_then(|f| f.solve_transpose_min_norm(&v)) {
        Ok(w) => w,
        Err(_) => vec![0.0; all_coarse.len()],
    };
    RowResult {
        support: all_coarse.iter().map(|&u| cf.coarse_local(u)).collect(),
        values: w,
        flagged: true,
        level: l_max,
    }
}

/// Classical one-step weighted-Jacobi prolongation smoothing, the comparison
/// baseline: P = (I - omega D^-1 A) P0. All rows are smoothed, so the result
/// is a plain operator rather than a [W; I]-form prolongation.
pub fn smoothed_prolongation(
    a: &SparseMatrix,
    p0: &Prolongation,
    omega: f64,
) -> Result<SparseMatrix> {
    if !(0.0..2.0).contains(&omega) {
        return Err(Error::InvalidConfig(format!(
            "smoothing weight {omega} outside [0, 2)"
        )));
    }
    if a.ncols() != p0.nrows() {
        return Err(Error::DimensionMismatch(
            "smoothing: matrix and prolongation do not conform".into(),
        ));
    }
    let p0_csr = p0.to_csr();
    if omega == 0.0 {
        return Ok(p0_csr);
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDiagonal(i));
    }
    let mut ap = a.spmm(&p0_csr)?;
    let factors: Vec<f64> = diag.iter().map(|&d| omega / d).collect();
    ap.scale_rows(&factors)?;
    SparseMatrix::linear_combination(1.0, &p0_csr, -1.0, &ap)
}
