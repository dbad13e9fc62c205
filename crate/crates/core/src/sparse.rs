//! Compressed sparse-row matrices and the kernels built on them.
//!
//! All value arithmetic is 64-bit. Row-parallel kernels accumulate each row
//! left to right in column order, so results are bitwise identical across
//! repeated calls and across thread counts.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Sparse matrix in compressed sparse-row format.
///
/// Invariants: `row_offsets` is nondecreasing with `row_offsets[nrows] == nnz`,
/// and column indices are strictly increasing within each row. Explicit zero
/// values are legal and preserved; pattern logic must never depend on value
/// cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                nrows + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets[nrows] != col_indices.len() {
            return Err(Error::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(
                "col_indices and values differ in length".into(),
            ));
        }
        for i in 0..nrows {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let row = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidStructure(format!(
                        "columns not strictly increasing in row {i}"
                    )));
                }
            }
            if let Some(&last) = row.last() {
                if last >= ncols {
                    return Err(Error::IndexOutOfBounds(format!(
                        "column {last} in row {i} exceeds ncols {ncols}"
                    )));
                }
            }
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::IndexOutOfBounds(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let nnz = counts[nrows];
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0f64; nnz];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            let p = next[i];
            cols[p] = j;
            vals[p] = v;
            next[i] += 1;
        }
        // Sort each row and merge duplicates.
        let mut row_offsets = vec![0usize; nrows + 1];
        let mut out_cols = Vec::with_capacity(nnz);
        let mut out_vals = Vec::with_capacity(nnz);
        for i in 0..nrows {
            let lo = counts[i];
            let hi = counts[i + 1];
            let mut row: Vec<(usize, f64)> = (lo..hi).map(|p| (cols[p], vals[p])).collect();
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = row[k].1;
                let mut k2 = k + 1;
                while k2 < row.len() && row[k2].0 == c {
                    v += row[k2].1;
                    k2 += 1;
                }
                out_cols.push(c);
                out_vals.push(v);
                k = k2;
            }
            row_offsets[i + 1] = out_cols.len();
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices: out_cols,
            values: out_vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        &self.col_indices[lo..hi]
    }

    /// Stored entry (i, j), if present.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|p| vals[p])
    }

    /// Diagonal as a dense vector; missing entries read as zero.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.get(i, i).unwrap_or(0.0))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let nnz = self.nnz();
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0f64; nnz];
        let mut next = counts.clone();
        for i in 0..self.nrows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                let p = next[j];
                cols[p] = i;
                vals[p] = v;
                next[j] += 1;
            }
        }
        // Rows come out sorted because the source rows are scanned in order.
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    /// Largest symmetry defect max |A(i,j) - A(j,i)|.
    pub fn symmetry_error(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let mut err = 0.0f64;
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = t.row(i);
            // Merge the two sorted rows.
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    err = err.max(va[p].abs());
                    p += 1;
                } else if p == ca.len() || cb[q] < ca[p] {
                    err = err.max(vb[q].abs());
                    q += 1;
                } else {
                    err = err.max((va[p] - vb[q]).abs());
                    p += 1;
                    q += 1;
                }
            }
        }
        err
    }

    /// Check the symmetry requirement for matrices declared SPD:
    /// max |A(i,j) - A(j,i)| <= 1e-12 * max |A|.
    pub fn check_spd_symmetry(&self) -> Result<()> {
        let err = self.symmetry_error();
        let bound = 1e-12 * self.max_abs();
        if err > bound {
            return Err(Error::NotSpd(format!(
                "symmetry defect {err:e} exceeds {bound:e}"
            )));
        }
        Ok(())
    }

    /// Matrix with the same pattern and all values set to one.
    pub fn to_pattern(&self) -> SparseMatrix {
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: vec![1.0; self.nnz()],
        }
    }

    /// Sparse matrix-vector product y = A x with a fixed left-to-right
    /// summation order per row.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "spmv: matrix has {} columns, vector has length {}",
                self.ncols,
                x.len()
            )));
        }
        let y: Vec<f64> = (0..self.nrows)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut acc = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += v * x[j];
                }
                acc
            })
            .collect();
        Ok(y)
    }

    /// Exact structural sparse product C = A B. Result rows are sorted and
    /// explicit zeros arising from cancellation are retained.
    pub fn spmm(&self, b: &SparseMatrix) -> Result<SparseMatrix> {
        if self.ncols != b.nrows {
            return Err(Error::DimensionMismatch(format!(
                "spmm: A is {}x{}, B is {}x{}",
                self.nrows, self.ncols, b.nrows, b.ncols
            )));
        }
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.nrows)
            .into_par_iter()
            .map_init(
                || (vec![usize::MAX; b.ncols], Vec::new(), Vec::new()),
                |(marker, touched, acc), i| {
                    touched.clear();
                    acc.clear();
                    let (acols, avals) = self.row(i);
                    for (&k, &av) in acols.iter().zip(avals) {
                        let (bcols, bvals) = b.row(k);
                        for (&j, &bv) in bcols.iter().zip(bvals) {
                            if marker[j] == usize::MAX {
                                marker[j] = touched.len();
                                touched.push(j);
                                acc.push(av * bv);
                            } else {
                                acc[marker[j]] += av * bv;
                            }
                        }
                    }
                    let mut order: Vec<usize> = (0..touched.len()).collect();
                    order.sort_by_key(|&p| touched[p]);
                    let cols: Vec<usize> = order.iter().map(|&p| touched[p]).collect();
                    let vals: Vec<f64> = order.iter().map(|&p| acc[p]).collect();
                    for &j in touched.iter() {
                        marker[j] = usize::MAX;
                    }
                    (cols, vals)
                },
            )
            .collect();
        Ok(Self::from_sorted_rows(self.nrows, b.ncols, rows))
    }

    /// Union-pattern linear combination alpha A + beta B.
    pub fn linear_combination(
        alpha: f64,
        a: &SparseMatrix,
        beta: f64,
        b: &SparseMatrix,
    ) -> Result<SparseMatrix> {
        if a.nrows != b.nrows || a.ncols != b.ncols {
            return Err(Error::DimensionMismatch(format!(
                "linear combination of {}x{} and {}x{}",
                a.nrows, a.ncols, b.nrows, b.ncols
            )));
        }
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..a.nrows)
            .into_par_iter()
            .map(|i| {
                let (ca, va) = a.row(i);
                let (cb, vb) = b.row(i);
                let mut cols = Vec::with_capacity(ca.len() + cb.len());
                let mut vals = Vec::with_capacity(ca.len() + cb.len());
                let (mut p, mut q) = (0, 0);
                while p < ca.len() || q < cb.len() {
                    if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                        cols.push(ca[p]);
                        vals.push(alpha * va[p]);
                        p += 1;
                    } else if p == ca.len() || cb[q] < ca[p] {
                        cols.push(cb[q]);
                        vals.push(beta * vb[q]);
                        q += 1;
                    } else {
                        cols.push(ca[p]);
                        vals.push(alpha * va[p] + beta * vb[q]);
                        p += 1;
                        q += 1;
                    }
                }
                (cols, vals)
            })
            .collect();
        Ok(Self::from_sorted_rows(a.nrows, a.ncols, rows))
    }

    /// Scale row i by `factors[i]`.
    pub fn scale_rows(&mut self, factors: &[f64]) -> Result<()> {
        if factors.len() != self.nrows {
            return Err(Error::DimensionMismatch(
                "scale_rows: factor length != nrows".into(),
            ));
        }
        for i in 0..self.nrows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            for v in &mut self.values[lo..hi] {
                *v *= factors[i];
            }
        }
        Ok(())
    }

    pub(crate) fn from_sorted_rows(
        nrows: usize,
        ncols: usize,
        rows: Vec<(Vec<usize>, Vec<f64>)>,
    ) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        row_offsets.push(0);
        let nnz: usize = rows.iter().map(|(c, _)| c.len()).sum();
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for (cols, vals) in rows {
            col_indices.extend_from_slice(&cols);
            values.extend_from_slice(&vals);
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn spmv_identity() {
        let a = SparseMatrix::identity(3);
        let y = a.spmv(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn spmv_laplacian_stencil() {
        // Hand expansion of the 3-point stencil on the all-ones vector.
        let a = laplacian_1d(3);
        let y = a.spmv(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn spmv_zero_vector() {
        let a = laplacian_1d(5);
        let y = a.spmv(&[0.0; 5]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let a = laplacian_1d(4);
        assert!(a.spmv(&[1.0; 3]).is_err());
    }

    #[test]
    fn spmv_repeatable_bits() {
        let a = laplacian_1d(64);
        let x: Vec<f64> = (0..64).map(|i| (i as f64).sin() + 0.1).collect();
        let y1 = a.spmv(&x).unwrap();
        let y2 = a.spmv(&x).unwrap();
        for (u, v) in y1.iter().zip(&y2) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn spmm_identity_right() {
        let a = laplacian_1d(4);
        let c = a.spmm(&SparseMatrix::identity(4)).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn spmm_matches_dense_oracle() {
        // 2x2 dense-as-sparse product against a direct dense multiply.
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 4.0)],
        )
        .unwrap();
        let b = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, -1.0), (0, 1, 0.5), (1, 0, 2.0), (1, 1, 1.5)],
        )
        .unwrap();
        let c = a.spmm(&b).unwrap();
        // Dense: [[1,2],[3,4]] * [[-1,0.5],[2,1.5]] = [[3,3.5],[5,7.5]]
        assert_eq!(c.get(0, 0), Some(3.0));
        assert_eq!(c.get(0, 1), Some(3.5));
        assert_eq!(c.get(1, 0), Some(5.0));
        assert_eq!(c.get(1, 1), Some(7.5));
    }

    #[test]
    fn spmm_pattern_contains_input_with_nonzero_diag() {
        let s = laplacian_1d(6).to_pattern();
        let p =
            SparseMatrix::from_triplets(6, 3, &[(0, 0, 1.0), (2, 1, 1.0), (5, 2, 1.0)]).unwrap();
        let sp = s.spmm(&p).unwrap();
        for i in 0..6 {
            for &c in p.row_cols(i) {
                assert!(sp.get(i, c).is_some(), "pattern lost entry ({i},{c})");
            }
        }
    }

    #[test]
    fn spmm_retains_cancellation_zeros() {
        // Row times column that cancels exactly: [1, -1] * [1; 1] = 0,
        // but the entry must stay in the pattern.
        let a = SparseMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, -1.0)]).unwrap();
        let b = SparseMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let c = a.spmm(&b).unwrap();
        assert_eq!(c.nnz(), 1);
        assert_eq!(c.get(0, 0), Some(0.0));
    }

    #[test]
    fn transpose_roundtrip() {
        let a = SparseMatrix::from_triplets(
            3,
            4,
            &[
                (0, 1, 2.0),
                (0, 3, -1.0),
                (1, 0, 4.0),
                (2, 2, 5.0),
                (2, 3, 6.0),
            ],
        )
        .unwrap();
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn symmetry_check() {
        let a = laplacian_1d(10);
        assert_eq!(a.symmetry_error(), 0.0);
        a.check_spd_symmetry().unwrap();
        let b = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(b.symmetry_error(), 0.5);
        assert!(b.check_spd_symmetry().is_err());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a =
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 1, -1.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 0), Some(3.5));
    }

    #[test]
    fn invalid_structure_rejected() {
        // unsorted columns
        assert!(SparseMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        // column out of range
        assert!(SparseMatrix::new(1, 2, vec![0, 1], vec![5], vec![1.0]).is_err());
    }
}
