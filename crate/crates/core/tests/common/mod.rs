//! Shared oracles for the integration suites. Everything here recomputes
//! quantities through an independent dense route; nothing calls back into the
//! kernels under test.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use eminamg::coarsening::{CfSplitting, NearKernel};
use eminamg::dense::DenseMatrix;
use eminamg::emin::ConstraintProjector;
use eminamg::sparse::SparseMatrix;
use eminamg::tentative::Prolongation;
use eminamg::vector::SplitMix64;

pub fn laplacian_1d(n: usize) -> SparseMatrix {
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

pub fn random_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
}

/// Classical Jacobi eigenvalue iteration for symmetric dense matrices.
/// Returns eigenvalues sorted ascending.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m.get(p, q).abs());
            }
        }
        let scale = (0..n).map(|i| m.get(i, i).abs()).fold(1e-300, f64::max);
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Dense solve via Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if m.get(i, k).abs() > m.get(piv, k).abs() {
                piv = i;
            }
        }
        if piv != k {
            for j in 0..n {
                let u = m.get(k, j);
                let v = m.get(piv, j);
                m.set(k, j, v);
                m.set(piv, j, u);
            }
            x.swap(k, piv);
        }
        let d = m.get(k, k);
        for i in k + 1..n {
            let f = m.get(i, k) / d;
            for j in k..n {
                let v = m.get(i, j) - f * m.get(k, j);
                m.set(i, j, v);
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m.get(i, j) * x[j];
        }
        x[i] = s / m.get(i, i);
    }
    x
}

/// Ideal interpolation weights W = -A_ff^{-1} A_fc computed densely; the
/// theoretical zero-energy target used as a small-instance oracle.
pub fn ideal_w(a: &SparseMatrix, cf: &CfSplitting) -> DenseMatrix {
    let ad = DenseMatrix::from_sparse(a);
    let nf = cf.n_fine();
    let nc = cf.n_coarse();
    let aff = DenseMatrix::from_fn(nf, nf, |i, j| ad.get(cf.f_list()[i], cf.f_list()[j]));
    let mut w = DenseMatrix::zeros(nf, nc);
    for c in 0..nc {
        let rhs: Vec<f64> = (0..nf)
            .map(|i| -ad.get(cf.f_list()[i], cf.c_list()[c]))
            .collect();
        let col = dense_solve(&aff, &rhs);
        for (i, v) in col.iter().enumerate() {
            w.set(i, c, *v);
        }
    }
    w
}

/// F-layout positions (global row, coarse column) in row-major order.
pub fn f_positions(p: &Prolongation) -> Vec<(usize, usize)> {
    let mut pos = Vec::with_capacity(p.f_nnz());
    for &i in p.cf().f_list() {
        for &c in p.row_support(i) {
            pos.push((i, c));
        }
    }
    pos
}

/// Explicit dense energy Hessian K in row-major F-layout enumeration:
/// K[t][s] = A(r_t, r_s) when the positions share a coarse column, else 0.
pub fn assemble_k(a: &SparseMatrix, p: &Prolongation) -> DenseMatrix {
    let pos = f_positions(p);
    let nn = pos.len();
    DenseMatrix::from_fn(nn, nn, |t, s| {
        let (rt, ct) = pos[t];
        let (rs, cs) = pos[s];
        if ct == cs {
            a.get(rt, rs).unwrap_or(0.0)
        } else {
            0.0
        }
    })
}

/// Complete an orthonormal set `cols` (each length n) to a full basis of R^n;
/// returns only the added vectors.
pub fn orthonormal_complement(cols: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.to_vec();
    let mut added = Vec::new();
    while basis.len() < n {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            for b in &basis {
                let d: f64 = b.iter().zip(&cand).map(|(x, y)| x * y).sum();
                for (c, bi) in cand.iter_mut().zip(b) {
                    *c -= d * bi;
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if best.as_ref().map(|(bn, _)| norm > *bn).unwrap_or(true) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.unwrap();
        assert!(norm > 1e-12, "cannot complete basis");
        let unit: Vec<f64> = cand.iter().map(|x| x / norm).collect();
        basis.push(unit.clone());
        added.push(unit);
    }
    added
}

/// Block-diagonal frames over the F-layout: Q spans range(B) per row (taken
/// from the projector under test is NOT allowed here, so it is recomputed
/// from the kernel), Z spans its orthogonal complement.
pub struct Frames {
    pub q: DenseMatrix,
    pub z: DenseMatrix,
}

/// Assemble explicit Q and Z from the near kernel and pattern alone.
pub fn assemble_frames(kernel: &NearKernel, p: &Prolongation) -> Frames {
    let cf = p.cf();
    let nn = p.f_nnz();
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    let mut z_cols: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0usize;
    for &i in cf.f_list() {
        let support = p.row_support(i);
        let n_l = support.len();
        if n_l == 0 {
            continue;
        }
        let globals: Vec<usize> = support.iter().map(|&c| cf.c_list()[c]).collect();
        let local = kernel.gather_rows(&globals); // n_l x m
        let f = eminamg::dense::svd(&local).unwrap();
        let k = f.rank();
        let mut range_cols: Vec<Vec<f64>> = Vec::new();
        for t in 0..k {
            range_cols.push(f.u.col(t).to_vec());
        }
        let null_cols = orthonormal_complement(&range_cols, n_l);
        for col in &range_cols {
            let mut full = vec![0.0; nn];
            full[offset..offset + n_l].copy_from_slice(col);
            q_cols.push(full);
        }
        for col in &null_cols {
            let mut full = vec![0.0; nn];
            full[offset..offset + n_l].copy_from_slice(col);
            z_cols.push(full);
        }
        offset += n_l;
    }
    let q = DenseMatrix::from_fn(nn, q_cols.len(), |i, j| q_cols[j][i]);
    let z = DenseMatrix::from_fn(nn, z_cols.len(), |i, j| z_cols[j][i]);
    Frames { q, z }
}

/// Assemble the projector's own Q blocks into a dense frame (for checks that
/// explicitly target the stored factors).
pub fn projector_q(proj: &ConstraintProjector) -> DenseMatrix {
    let nn = proj.total_nnz();
    let total_rank: usize = proj.rows().iter().map(|r| r.rank).sum();
    let mut q = DenseMatrix::zeros(nn, total_rank);
    let mut col = 0usize;
    for rb in proj.rows() {
        for t in 0..rb.rank {
            for i in 0..rb.width {
                q.set(rb.offset + i, col, rb.q.get(i, t));
            }
            col += 1;
        }
    }
    q
}

/// Explicit symmetric Gauss-Seidel action (L+D)^{-T} D (L+D)^{-1} r over one
/// dense block.
pub fn dense_sgs_apply(block: &DenseMatrix, r: &[f64]) -> Vec<f64> {
    let n = block.nrows();
    let mut u = vec![0.0; n];
    for i in 0..n {
        let mut s = r[i];
        for j in 0..i {
            s -= block.get(i, j) * u[j];
        }
        u[i] = s / block.get(i, i);
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = block.get(i, i) * u[i];
        for j in i + 1..n {
            s -= block.get(j, i) * z[j];
        }
        z[i] = s / block.get(i, i);
    }
    z
}

/// Max |x - y| over two equal-length slices.
pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
