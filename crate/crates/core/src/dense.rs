//! Small dense matrices and the factorizations used on local blocks.
//!
//! Blocks here are tiny (tens of rows/columns), so plain Householder QR and
//! one-sided Jacobi SVD are accurate and fast enough. Storage is column-major.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Shared relative tolerance for numerical-rank decisions: QR declares rank
/// deficiency when |R_kk| <= RANK_TOL * |R_00|, and SVD counts singular values
/// above RANK_TOL * sigma_max. A single constant keeps the QR failure branch
/// and the SVD rank in agreement.
pub const RANK_TOL: f64 = 1e-10;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            values: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Build from a column-major value array.
    pub fn from_column_major(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nrows * ncols {
            return Err(Error::DimensionMismatch(format!(
                "dense {}x{} needs {} values, got {}",
                nrows,
                ncols,
                nrows * ncols,
                values.len()
            )));
        }
        Ok(DenseMatrix {
            nrows,
            ncols,
            values,
        })
    }

    pub fn from_sparse(a: &SparseMatrix) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.nrows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        Self::from_fn(self.ncols, self.nrows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != b.nrows {
            return Err(Error::DimensionMismatch(format!(
                "dense matmul: {}x{} times {}x{}",
                self.nrows, self.ncols, b.nrows, b.ncols
            )));
        }
        let mut c = Self::zeros(self.nrows, b.ncols);
        for j in 0..b.ncols {
            for k in 0..self.ncols {
                let bkj = b.get(k, j);
                if bkj == 0.0 {
                    continue;
                }
                for i in 0..self.nrows {
                    let v = c.get(i, j) + self.get(i, k) * bkj;
                    c.set(i, j, v);
                }
            }
        }
        Ok(c)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch(
                "dense matvec length mismatch".into(),
            ));
        }
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            for i in 0..self.nrows {
                y[i] += self.get(i, j) * xj;
            }
        }
        Ok(y)
    }

    /// y = A^T x.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nrows {
            return Err(Error::DimensionMismatch(
                "dense matvec_transpose length mismatch".into(),
            ));
        }
        Ok((0..self.ncols)
            .map(|j| self.col(j).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Economy QR factorization B = Q R with Q of size n x m orthonormal and R
/// m x m upper triangular.
#[derive(Debug, Clone)]
pub struct QrFactors {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

impl QrFactors {
    /// Numerical rank from the R diagonal: entries with
    /// |R_kk| <= RANK_TOL * |R_00| count as zero.
    pub fn rank(&self) -> usize {
        let m = self.r.ncols();
        if m == 0 {
            return 0;
        }
        let r00 = self.r.get(0, 0).abs();
        if r00 == 0.0 {
            return 0;
        }
        (0..m)
            .take_while(|&k| self.r.get(k, k).abs() > RANK_TOL * r00)
            .count()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.r.ncols()
    }

    /// Solve R^T y = b (forward substitution on the lower-triangular R^T).
    pub fn solve_rt(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.r.ncols();
        if b.len() != m {
            return Err(Error::DimensionMismatch("solve_rt length".into()));
        }
        let mut y = vec![0.0; m];
        for i in 0..m {
            let mut s = b[i];
            for j in 0..i {
                s -= self.r.get(j, i) * y[j];
            }
            let d = self.r.get(i, i);
            if d == 0.0 {
                return Err(Error::RankDeficient("zero pivot in R".into()));
            }
            y[i] = s / d;
        }
        Ok(y)
    }

    /// Solve R x = b (back substitution).
    pub fn solve_r(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.r.ncols();
        if b.len() != m {
            return Err(Error::DimensionMismatch("solve_r length".into()));
        }
        let mut x = vec![0.0; m];
        for i in (0..m).rev() {
            let mut s = b[i];
            for j in i + 1..m {
                s -= self.r.get(i, j) * x[j];
            }
            let d = self.r.get(i, i);
            if d == 0.0 {
                return Err(Error::RankDeficient("zero pivot in R".into()));
            }
            x[i] = s / d;
        }
        Ok(x)
    }
}

/// Householder economy-size QR. Requires nrows >= ncols; callers route wide
/// blocks to the SVD instead.
pub fn qr_economy(b: &DenseMatrix) -> Result<QrFactors> {
    let n = b.nrows();
    let m = b.ncols();
    if n < m {
        return Err(Error::DimensionMismatch(format!(
            "qr_economy requires nrows >= ncols, got {n}x{m}"
        )));
    }
    let mut work = b.clone();
    // Householder vectors, one per column, each of length n - k.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    for k in 0..m {
        let mut v: Vec<f64> = (k..n).map(|i| work.get(i, k)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            vs.push(v);
            betas.push(0.0);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        // Apply H = I - beta v v^T to columns k..m.
        for j in k..m {
            let mut dot = 0.0;
            for (t, vi) in v.iter().enumerate() {
                dot += vi * work.get(k + t, j);
            }
            let s = beta * dot;
            for (t, vi) in v.iter().enumerate() {
                let val = work.get(k + t, j) - s * vi;
                work.set(k + t, j, val);
            }
        }
        work.set(k, k, alpha);
        vs.push(v);
        betas.push(beta);
    }
    let mut r = DenseMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            r.set(i, j, work.get(i, j));
        }
    }
    // Accumulate the economy Q by applying the reflectors in reverse to the
    // first m columns of the identity.
    let mut q = DenseMatrix::zeros(n, m);
    for j in 0..m {
        q.set(j, j, 1.0);
    }
    for k in (0..m).rev() {
        let v = &vs[k];
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        for j in 0..m {
            let mut dot = 0.0;
            for (t, vi) in v.iter().enumerate() {
                dot += vi * q.get(k + t, j);
            }
            let s = beta * dot;
            for (t, vi) in v.iter().enumerate() {
                let val = q.get(k + t, j) - s * vi;
                q.set(k + t, j, val);
            }
        }
    }
    Ok(QrFactors { q, r })
}

/// Singular value decomposition B = U diag(sigma) V^T with singular values in
/// nonincreasing order; U is n x p and V is m x p for p = min(n, m).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > RANK_TOL * smax).count()
    }

    /// Minimum-norm least-squares solve of B^T d = r through the factors,
    /// truncated at the numerical rank: d = U_k diag(1/sigma_k) V_k^T r.
    pub fn solve_transpose_min_norm(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.v.nrows() {
            return Err(Error::DimensionMismatch(
                "svd solve_transpose length".into(),
            ));
        }
        let k = self.rank();
        let mut d = vec![0.0; self.u.nrows()];
        for t in 0..k {
            let vt_r: f64 = self.v.col(t).iter().zip(r).map(|(a, b)| a * b).sum();
            let c = vt_r / self.sigma[t];
            for (di, ui) in d.iter_mut().zip(self.u.col(t)) {
                *di += c * ui;
            }
        }
        Ok(d)
    }
}

/// One-sided Jacobi SVD. Accepts any shape and any rank.
pub fn svd(b: &DenseMatrix) -> Result<Svd> {
    for &v in b.values() {
        if !v.is_finite() {
            return Err(Error::NonFinite("svd input".into()));
        }
    }
    if b.nrows() < b.ncols() {
        let t = svd(&b.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let n = b.nrows();
    let m = b.ncols();
    let mut w = b.clone();
    let mut v = DenseMatrix::identity(m);
    let max_sweeps = 64;
    let tol = 1e-15;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..m.saturating_sub(1) {
            for q in p + 1..m {
                let (app, aqq, apq) = {
                    let wp = w.col(p);
                    let wq = w.col(q);
                    let app: f64 = wp.iter().map(|x| x * x).sum();
                    let aqq: f64 = wq.iter().map(|x| x * x).sum();
                    let apq: f64 = wp.iter().zip(wq).map(|(a, b)| a * b).sum();
                    (app, aqq, apq)
                };
                if apq == 0.0 || apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..n {
                    let wip = w.get(i, p);
                    let wiq = w.get(i, q);
                    w.set(i, p, cs * wip - sn * wiq);
                    w.set(i, q, sn * wip + cs * wiq);
                }
                for i in 0..m {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, cs * vip - sn * viq);
                    v.set(i, q, sn * vip + cs * viq);
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sig: Vec<(f64, usize)> = (0..m)
        .map(|j| {
            let s: f64 = w.col(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            (s, j)
        })
        .collect();
    sig.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let smax = sig.first().map(|s| s.0).unwrap_or(0.0);
    let mut u = DenseMatrix::zeros(n, m);
    let mut vperm = DenseMatrix::zeros(m, m);
    let mut sigma = Vec::with_capacity(m);
    for (t, &(s, j)) in sig.iter().enumerate() {
        sigma.push(s);
        for i in 0..m {
            vperm.set(i, t, v.get(i, j));
        }
        if s > 0.0 && s > smax * 1e-300 {
            for i in 0..n {
                u.set(i, t, w.get(i, j) / s);
            }
        }
    }
    complete_orthonormal(&mut u, &sigma, smax);
    Ok(Svd { u, sigma, v: vperm })
}

/// Replace the columns of `u` whose singular value vanished with vectors
/// orthonormal to the rest, so U always has orthonormal columns.
fn complete_orthonormal(u: &mut DenseMatrix, sigma: &[f64], smax: f64) {
    let n = u.nrows();
    for t in 0..u.ncols() {
        let dead = sigma[t] == 0.0 || sigma[t] <= smax * 1e-300;
        if !dead {
            continue;
        }
        // Pick the coordinate direction with the largest residual after
        // projecting out the live columns.
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            for j in 0..u.ncols() {
                if j == t || (sigma[j] == 0.0 && j > t) {
                    continue;
                }
                let col = u.col(j);
                let d: f64 = col.iter().zip(&cand).map(|(a, b)| a * b).sum();
                for (c, &cj) in cand.iter_mut().zip(col) {
                    *c -= d * cj;
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().map(|(b, _)| norm > *b).unwrap_or(true) {
                best = Some((norm, cand));
            }
        }
        if let Some((norm, cand)) = best {
            if norm > 0.0 {
                for (i, c) in cand.iter().enumerate() {
                    u.set(i, t, c / norm);
                }
            }
        }
    }
}

/// Dense Cholesky factorization A = L L^T for the coarse-level direct solve.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("cholesky of non-square".into()));
        }
        let n = a.nrows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                let ljk = l.get(j, k);
                d -= ljk * ljk;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotSpd(format!(
                    "nonpositive pivot {d:e} at column {j}"
                )));
            }
            let djj = d.sqrt();
            l.set(j, j, djj);
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / djj);
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor_sparse(a: &SparseMatrix) -> Result<Self> {
        Self::factor(&DenseMatrix::from_sparse(a))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.nrows();
        if b.len() != n {
            return Err(Error::DimensionMismatch("cholesky solve length".into()));
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.l.get(i, j) * y[j];
            }
            y[i] = s / self.l.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.l.get(j, i) * x[j];
            }
            x[i] = s / self.l.get(i, i);
        }
        Ok(x)
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }
}
